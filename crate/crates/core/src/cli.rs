//! Command-line front end.
//!
//! Settings come from built-in defaults, then an optional `key = value`
//! config file, then `--set key=value` pairs, then dedicated flags. Relative
//! paths are resolved against the working directory.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `tasks` | 60000 | training tasks `T` |
//! | `batch` | 4 | tasks per meta-batch `B` |
//! | `lambda` | 1/4 if `shots = 1`, else 1/3 | primary-phase fraction, decimal or `a/b` |
//! | `ways`, `shots`, `queries` | 5, 5, 20 | `N`, `K`, `Q` |
//! | `alpha`, `beta` | 0.1, 0.01 | initial inner rate, outer rate |
//! | `measure` | hsic | `pairwise`, `hausdorff` or `hsic` |
//! | `schedule` | expert | `uniform`, `expert`, `reversed`, `probabilistic_et`, `semantic_expert` |
//! | `p` | 0.8 | target-type probability of `probabilistic_et` |
//! | `meta_mode` | meta_sgd | `meta_sgd` or `maml` |
//! | `first_order` | true | drop the second-order meta-gradient term |
//! | `hidden` | 64,32 | hidden layer widths |
//! | `seed` | 0 | master seed |
//! | `eval_tasks` | 600 | test tasks `V` |
//! | `test_mode` | random | `random`, `all_easy`, `all_hard`, comma lists allowed |
//! | `probe_tasks` | 100 | tasks listed by `hardness` and `sample` |
//! | `dataset`, `taxonomy` | none | input files |
//! | `checkpoint` | checkpoint.txt | written by `train`, read by `eval` and `hardness` |
//! | `metrics` | metrics.csv | batch log written by `train` |
//! | `out` | stdout | output of `eval`, `hardness`, `sample`; directory for `synth` |
//! | `superclasses`, `classes_per_superclass`, `samples_per_class`, `dim` | 12, 5, 50, 16 | `synth` sizes |
//! | `sigma_super`, `sigma_class`, `sigma_noise` | 3, 1, 0.5 | `synth` spreads |
//! | `test_superclasses` | 5 | superclasses held out by `synth` |
//!
//! `HARDMETA_THREADS` sets the worker thread count. Output never depends on it.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::episode::DataDictionary;
use crate::error::Error;
use crate::hardness::{task_hardness, ClassFeatureSet};
use crate::learner::{LearnerState, MetaMode};
use crate::metatrain::{
    evaluate, query_feature_sets, sample_episode, train_with, EvalResult, EvalSettings, Schedule,
    TaskKind, TestMode, TrainPlan,
};
use crate::rng::{derive_stream, StreamPurpose};
use crate::synth::{generate, split_by_superclass, SynthSpec, DEFAULT_TEST_SUPERCLASSES};
use crate::taxonomy::Taxonomy;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const THREADS_ENV: &str = "HARDMETA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hardmeta", version, about = "Hardness-aware meta-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic hierarchy and a superclass-disjoint split.
    Synth(Flags),
    /// Meta-train a learner and write its batch log and checkpoint.
    Train(Flags),
    /// Evaluate a checkpoint on test tasks.
    Eval(Flags),
    /// Score task hardness for sampled tasks.
    Hardness(Flags),
    /// List the classes of sampled tasks.
    Sample(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// key = value settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Metrics file for `train`, output file (or directory for `synth`) otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    /// Test or sampling mode
    #[arg(long)]
    mode: Option<String>,
    /// Task count of the subcommand
    #[arg(long)]
    tasks: Option<usize>,
}

/// Failure of a command, split by exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) | Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Runtime(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Every setting of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plan: TrainPlan,
    schedule_name: String,
    p: f64,
    lambda: Option<f64>,
    pub dataset: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub out: Option<PathBuf>,
    pub eval_tasks: usize,
    pub test_modes: Vec<TestMode>,
    pub probe_tasks: usize,
    pub synth: SynthSpec,
    pub test_superclasses: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            plan: TrainPlan::default(),
            schedule_name: "expert".into(),
            p: 0.8,
            lambda: None,
            dataset: None,
            taxonomy: None,
            checkpoint: PathBuf::from("checkpoint.txt"),
            metrics: PathBuf::from("metrics.csv"),
            out: None,
            eval_tasks: 600,
            test_modes: vec![TestMode::Random],
            probe_tasks: 100,
            synth: SynthSpec::default(),
            test_superclasses: DEFAULT_TEST_SUPERCLASSES,
        }
    }
}

/// Parses a decimal or an `a/b` fraction.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .or_else(|_| usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_float(key: &str, value: &str) -> CliResult<f64> {
    parse_number(value).map_or_else(|| usage(format!("invalid number `{value}` for `{key}`")), Ok)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key.trim() {
            "tasks" => self.plan.tasks = parse_value(key, v)?,
            "batch" => self.plan.batch = parse_value(key, v)?,
            "lambda" => self.lambda = Some(parse_float(key, v)?),
            "ways" => self.plan.ways = parse_value(key, v)?,
            "shots" => self.plan.shots = parse_value(key, v)?,
            "queries" => self.plan.queries = parse_value(key, v)?,
            "alpha" => self.plan.alpha = parse_float(key, v)?,
            "beta" => self.plan.beta = parse_float(key, v)?,
            "measure" => self.plan.measure = v.parse().map_err(CliError::from)?,
            "schedule" => self.schedule_name = v.to_string(),
            "p" => self.p = parse_float(key, v)?,
            "meta_mode" => self.plan.meta_mode = v.parse::<MetaMode>().map_err(CliError::from)?,
            "first_order" => self.plan.first_order = parse_value(key, v)?,
            "hidden" => {
                self.plan.hidden = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|w| parse_value(key, w)).collect::<CliResult<_>>()?
                }
            }
            "seed" => self.plan.seed = parse_value(key, v)?,
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "taxonomy" => self.taxonomy = Some(PathBuf::from(v)),
            "checkpoint" => self.checkpoint = PathBuf::from(v),
            "metrics" => self.metrics = PathBuf::from(v),
            "out" => self.out = Some(PathBuf::from(v)),
            "eval_tasks" => self.eval_tasks = parse_value(key, v)?,
            "test_mode" => {
                self.test_modes = v
                    .split(',')
                    .map(|m| m.parse::<TestMode>().map_err(CliError::from))
                    .collect::<CliResult<_>>()?
            }
            "probe_tasks" => self.probe_tasks = parse_value(key, v)?,
            "superclasses" => self.synth.superclasses = parse_value(key, v)?,
            "classes_per_superclass" => self.synth.classes_per_superclass = parse_value(key, v)?,
            "samples_per_class" => self.synth.samples_per_class = parse_value(key, v)?,
            "dim" => self.synth.dim = parse_value(key, v)?,
            "sigma_super" => self.synth.sigma_super = parse_float(key, v)?,
            "sigma_class" => self.synth.sigma_class = parse_float(key, v)?,
            "sigma_noise" => self.synth.sigma_noise = parse_float(key, v)?,
            "test_superclasses" => self.test_superclasses = parse_value(key, v)?,
            other => return usage(format!("unknown setting `{other}`")),
        }
        Ok(())
    }

    /// Applies a `key = value` file. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return usage(format!("config line {}: expected `key = value`", i + 1));
            };
            self.set(k, v)
                .map_err(|e| CliError::Usage(format!("config line {}: {}", i + 1, strip_usage(e))))?;
        }
        Ok(())
    }

    /// Fills derived settings and checks ranges.
    pub fn finish(mut self) -> CliResult<Self> {
        self.plan.lambda = self
            .lambda
            .unwrap_or(if self.plan.shots == 1 { 0.25 } else { 1.0 / 3.0 });
        self.plan.schedule = Schedule::parse(&self.schedule_name, self.p)?;
        self.synth.seed = self.plan.seed;
        self.plan.validate()?;
        if self.eval_tasks == 0 || self.probe_tasks == 0 {
            return usage("eval_tasks and probe_tasks must be >= 1");
        }
        if self.test_modes.is_empty() {
            return usage("test_mode must name at least one mode");
        }
        Ok(self)
    }
}

fn strip_usage(e: CliError) -> String {
    match e {
        CliError::Usage(m) => m,
        CliError::Runtime(e) => e.to_string(),
    }
}

fn build_config(flags: &Flags, task_key: &str) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path)
            .or_else(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for pair in &flags.set {
        let Some((k, v)) = pair.split_once('=') else {
            return usage(format!("--set expects KEY=VALUE, got `{pair}`"));
        };
        cfg.set(k, v)?;
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let overrides = [
        ("dataset", path(&flags.dataset)),
        ("taxonomy", path(&flags.taxonomy)),
        ("checkpoint", path(&flags.checkpoint)),
        ("seed", flags.seed.map(|s| s.to_string())),
        ("schedule", flags.schedule.clone()),
        ("measure", flags.measure.clone()),
        ("test_mode", flags.mode.clone()),
        (task_key, flags.tasks.map(|t| t.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(out) = &flags.out {
        cfg.out = Some(out.clone());
    }
    cfg.finish()
}

fn existing<'a>(path: Option<&'a PathBuf>, what: &str) -> CliResult<&'a Path> {
    match path {
        None => usage(format!("missing {what} path")),
        Some(p) if !p.exists() => usage(format!("{what} {} does not exist", p.display())),
        Some(p) => Ok(p),
    }
}

fn load_inputs(cfg: &RunConfig, require_taxonomy: bool) -> CliResult<(DataDictionary, Option<Taxonomy>)> {
    let data = DataDictionary::load(existing(cfg.dataset.as_ref(), "dataset")?)?;
    let tax = match (&cfg.taxonomy, require_taxonomy) {
        (None, false) => None,
        (t, _) => Some(Taxonomy::load(existing(t.as_ref(), "taxonomy")?)?),
    };
    if let Some(t) = &tax {
        data.check_taxonomy(t)?;
    }
    Ok((data, tax))
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Runtime(Error::io(p, e)))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(Error::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn cmd_synth(cfg: &RunConfig) -> CliResult<()> {
    let Some(dir) = &cfg.out else {
        return usage("synth needs --out <directory>");
    };
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(Error::io(dir, e)))?;
    let (data, tax) = generate(&cfg.synth)?;
    let (train, test) = split_by_superclass(&data, &tax, cfg.test_superclasses)?;
    let files = [
        ("train.csv", train.data.to_csv()),
        ("test.csv", test.data.to_csv()),
        ("train_taxonomy.txt", train.taxonomy.to_text()),
        ("test_taxonomy.txt", test.taxonomy.to_text()),
        ("taxonomy.txt", tax.to_text()),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Runtime(Error::io(&path, e)))?;
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let (data, tax) = load_inputs(cfg, cfg.plan.schedule.needs_taxonomy())?;
    let metrics = cfg.out.clone().unwrap_or_else(|| cfg.metrics.clone());
    let mut out = open_output(Some(&metrics))?;
    let on_err = io_err(Some(&metrics));
    writeln!(out, "{}", crate::metatrain::BatchLog::CSV_HEADER).map_err(&on_err)?;
    let mut write_error = None;
    let state = train_with(&cfg.plan, &data, tax.as_ref(), |log| {
        if write_error.is_none() {
            if let Err(e) = writeln!(out, "{}", log.to_csv_row()) {
                write_error = Some(e);
            }
        }
    })?;
    if let Some(e) = write_error {
        return Err(on_err(e));
    }
    out.flush().map_err(&on_err)?;
    state.save(&cfg.checkpoint)?;
    Ok(())
}

fn load_checkpoint(cfg: &RunConfig) -> CliResult<LearnerState> {
    Ok(LearnerState::load(existing(Some(&cfg.checkpoint), "checkpoint")?)?)
}

fn cmd_eval(cfg: &RunConfig) -> CliResult<()> {
    let needs_tax = cfg.test_modes.iter().any(|m| *m != TestMode::Random);
    let (data, tax) = load_inputs(cfg, needs_tax)?;
    let state = load_checkpoint(cfg)?;
    let mut rows = Vec::with_capacity(cfg.test_modes.len());
    for &mode in &cfg.test_modes {
        let settings = EvalSettings {
            tasks: cfg.eval_tasks,
            ways: cfg.plan.ways,
            shots: cfg.plan.shots,
            queries: cfg.plan.queries,
            mode,
            seed: cfg.plan.seed,
        };
        rows.push(evaluate(&state, &data, tax.as_ref(), &settings)?.to_csv_row(mode));
    }
    let path = cfg.out.as_deref();
    let mut out = open_output(path)?;
    writeln!(out, "{}", EvalResult::CSV_HEADER).map_err(io_err(path))?;
    for row in rows {
        writeln!(out, "{row}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn probe_kind(cfg: &RunConfig) -> CliResult<TaskKind> {
    match cfg.test_modes.as_slice() {
        [TestMode::Random] => Ok(TaskKind::Random),
        [TestMode::AllEasy] => Ok(TaskKind::Easy),
        [TestMode::AllHard] => Ok(TaskKind::Hard),
        _ => usage("hardness and sample take a single mode"),
    }
}

/// Probe episodes shared by `hardness` and `sample`: task `i` is drawn from
/// its own sampling stream, so both commands see the same classes.
fn probe_episodes(
    cfg: &RunConfig,
    data: &DataDictionary,
    tax: Option<&Taxonomy>,
    kind: TaskKind,
) -> CliResult<Vec<crate::episode::Episode>> {
    (0..cfg.probe_tasks as u64)
        .map(|i| {
            let mut rng = derive_stream(cfg.plan.seed, StreamPurpose::Sampling, i);
            let shape = (cfg.plan.ways, cfg.plan.shots, cfg.plan.queries);
            sample_episode(kind, data, tax, shape, i, &mut rng).map_err(CliError::from)
        })
        .collect()
}

fn cmd_hardness(cfg: &RunConfig) -> CliResult<()> {
    let kind = probe_kind(cfg)?;
    let (data, tax) = load_inputs(cfg, kind != TaskKind::Random)?;
    let state = match cfg.checkpoint.exists() {
        true => Some(load_checkpoint(cfg)?),
        false => None,
    };
    let episodes = probe_episodes(cfg, &data, tax.as_ref(), kind)?;
    let path = cfg.out.as_deref();
    let mut out = open_output(path)?;
    writeln!(out, "task_index,measure,th").map_err(io_err(path))?;
    for ep in &episodes {
        let sets = match &state {
            Some(state) => {
                let adapted = state.params.inner_update(&state.rates, &ep.support)?;
                query_feature_sets(&adapted, ep)?
            }
            None => (0..ep.ways())
                .map(|label| {
                    let rows = ep.query_of(label).iter().map(|e| e.features.clone()).collect();
                    ClassFeatureSet::new(ep.classes[label].clone(), rows)
                })
                .collect::<crate::Result<Vec<_>>>()?,
        };
        let report = task_hardness(&sets, cfg.plan.measure)?;
        writeln!(out, "{},{},{}", ep.task_index, cfg.plan.measure, report.hardness).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn cmd_sample(cfg: &RunConfig) -> CliResult<()> {
    let kind = probe_kind(cfg)?;
    let (data, tax) = load_inputs(cfg, kind != TaskKind::Random)?;
    let episodes = probe_episodes(cfg, &data, tax.as_ref(), kind)?;
    let path = cfg.out.as_deref();
    let mut out = open_output(path)?;
    writeln!(out, "task_index,kind,class_ids").map_err(io_err(path))?;
    let kind_name = cfg.test_modes[0].name();
    for ep in &episodes {
        let mut ids = ep.classes.clone();
        ids.sort();
        writeln!(out, "{},{},{}", ep.task_index, kind_name, ids.join(";")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => return usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        }
    }
    builder
        .build()
        .map_err(|e| CliError::Runtime(Error::InvalidArgument(format!("thread pool: {e}"))))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let pool = thread_pool()?;
    pool.install(|| match &cli.command {
        Command::Synth(f) => cmd_synth(&build_config(f, "tasks")?),
        Command::Train(f) => cmd_train(&build_config(f, "tasks")?),
        Command::Eval(f) => cmd_eval(&build_config(f, "eval_tasks")?),
        Command::Hardness(f) => cmd_hardness(&build_config(f, "probe_tasks")?),
        Command::Sample(f) => cmd_sample(&build_config(f, "probe_tasks")?),
    })
}

/// Runs the command line `args` (program name first) and returns the exit
/// status. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hardmeta: {e}");
            e.exit_code()
        }
    }
}
