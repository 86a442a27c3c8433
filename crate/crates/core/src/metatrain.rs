//! Episodic meta-training with hardness-weighted batches, and evaluation.
//!
//! Every task is adapted with a single inner step on its support set. The
//! adapted learner's last-hidden-layer features of the query set give the
//! task's hardness score, and the query loss gives its meta-gradient. Within
//! a batch, per-task meta-gradients are combined with weights derived from
//! the hardness scores and the current curriculum phase, then applied with
//! one outer step.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::episode::{build_episode, random_episode, DataDictionary, Episode, Example};
use crate::error::{Error, Result};
use crate::hardness::{batch_weights, task_hardness, ClassFeatureSet, Measure, Phase};
use crate::learner::{
    Architecture, InnerRates, LearnerParams, LearnerState, MetaMode, Objective, MIN_INNER_RATE,
};
use crate::rng::{derive_stream, derive_task_rng, StreamPurpose};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// Random tasks, equal weights.
    Uniform,
    /// Random tasks, easy tasks up-weighted first and hard tasks later.
    Expert,
    /// Random tasks, hard tasks up-weighted first and easy tasks later.
    Reversed,
    /// Semantic tasks: the phase's target type with probability `p`, the
    /// other type otherwise. Equal weights.
    ProbabilisticEt(f64),
    /// Semantic tasks: easy in the primary phase, hard in the advanced
    /// phase. Equal weights.
    SemanticExpert,
}

impl Schedule {
    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Uniform => "uniform",
            Schedule::Expert => "expert",
            Schedule::Reversed => "reversed",
            Schedule::ProbabilisticEt(_) => "probabilistic_et",
            Schedule::SemanticExpert => "semantic_expert",
        }
    }

    pub fn needs_taxonomy(&self) -> bool {
        matches!(self, Schedule::ProbabilisticEt(_) | Schedule::SemanticExpert)
    }

    /// Phase whose branch of the hardness transform weights the batch, or
    /// `None` for equal weights.
    fn weighting_phase(&self, phase: Phase) -> Option<Phase> {
        match self {
            Schedule::Expert => Some(phase),
            Schedule::Reversed => Some(phase.swapped()),
            _ => None,
        }
    }

    /// Parses a schedule name; `probabilistic_et` takes its probability from `p`.
    pub fn parse(name: &str, p: f64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" => Ok(Schedule::Uniform),
            "expert" => Ok(Schedule::Expert),
            "reversed" => Ok(Schedule::Reversed),
            "probabilistic_et" | "probabilistic" => Ok(Schedule::ProbabilisticEt(p)),
            "semantic_expert" | "semantic" => Ok(Schedule::SemanticExpert),
            other => Err(Error::Config(format!("unknown schedule `{other}`"))),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    /// Total number of training tasks, `T`.
    pub tasks: usize,
    /// Tasks per meta-batch, `B`.
    pub batch: usize,
    /// Fraction of tasks in the primary phase.
    pub lambda: f64,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    /// Outer learning rate.
    pub beta: f64,
    /// Initial inner learning rate.
    pub alpha: f64,
    pub measure: Measure,
    pub schedule: Schedule,
    pub meta_mode: MetaMode,
    pub first_order: bool,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            tasks: 60_000,
            batch: 4,
            lambda: 1.0 / 3.0,
            ways: 5,
            shots: 5,
            queries: 20,
            beta: 0.01,
            alpha: 0.1,
            measure: Measure::Hsic,
            schedule: Schedule::Expert,
            meta_mode: MetaMode::MetaSgd,
            first_order: true,
            hidden: vec![64, 32],
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch == 0 || self.tasks < self.batch {
            return bad("need tasks >= batch >= 1");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be > 0");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if let Schedule::ProbabilisticEt(p) = self.schedule {
            if !(p > 0.0 && p < 1.0) {
                return bad("probabilistic schedule needs 0 < p < 1");
            }
        }
        if self.ways < 2 || self.shots == 0 || self.queries == 0 {
            return bad("need ways >= 2, shots >= 1, queries >= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be >= 1");
        }
        Ok(())
    }

    /// Number of tasks in the primary phase, `floor(lambda * T)`.
    pub fn primary_tasks(&self) -> usize {
        (self.lambda * self.tasks as f64).floor() as usize
    }

    pub fn phase_of(&self, task_index: usize) -> Result<Phase> {
        if task_index >= self.tasks {
            return Err(Error::InvalidArgument(format!(
                "task index {task_index} outside 0..{}",
                self.tasks
            )));
        }
        Ok(if task_index < self.primary_tasks() {
            Phase::Primary
        } else {
            Phase::Advanced
        })
    }

    pub fn num_batches(&self) -> usize {
        self.tasks.div_ceil(self.batch)
    }
}

/// Per-task derivatives of the query loss after one inner step.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGradient {
    pub support_loss: f64,
    pub query_loss: f64,
    pub adapted: Vec<f64>,
    /// d query-loss / d theta.
    pub theta: Vec<f64>,
    /// d query-loss / d alpha, one entry per parameter.
    pub alpha: Vec<f64>,
}

/// Query loss of `theta' = theta - alpha ⊙ grad L_support(theta)` and its
/// derivatives.
///
/// With `first_order`, `grad L_support` is treated as constant in theta so
/// the theta-gradient is the adapted query gradient `g'`. Otherwise it is
/// `g' - H_support (alpha ⊙ g')`. The alpha-gradient `-g' ⊙ grad L_support`
/// is exact in both modes.
pub fn task_meta_gradient<O: Objective + ?Sized>(
    objective: &O,
    theta: &[f64],
    rates: &InnerRates,
    support: &O::Batch,
    query: &O::Batch,
    first_order: bool,
) -> Result<TaskGradient> {
    let (support_loss, support_grad) = objective.loss_and_grad(theta, support)?;
    let adapted = rates.step(theta, &support_grad)?;
    let (query_loss, query_grad) = objective.loss_and_grad(&adapted, query)?;
    let alpha: Vec<f64> = query_grad
        .iter()
        .zip(&support_grad)
        .map(|(q, s)| -q * s)
        .collect();
    let theta_grad = if first_order {
        query_grad
    } else {
        let hv = objective.hessian_vec(theta, support, &rates.scale(&query_grad))?;
        query_grad.iter().zip(&hv).map(|(g, h)| g - h).collect()
    };
    Ok(TaskGradient {
        support_loss,
        query_loss,
        adapted,
        theta: theta_grad,
        alpha,
    })
}

/// Everything one task contributes to a meta-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task_index: u64,
    pub hardness: f64,
    pub gradient: TaskGradient,
}

/// Query-set features of the adapted learner, grouped by local label.
pub fn query_feature_sets(adapted: &LearnerParams, episode: &Episode) -> Result<Vec<ClassFeatureSet>> {
    (0..episode.ways())
        .map(|label| {
            let rows = episode
                .query_of(label)
                .iter()
                .map(|e| adapted.extract_features(&e.features))
                .collect::<Result<Vec<_>>>()?;
            ClassFeatureSet::new(episode.classes[label].clone(), rows)
        })
        .collect()
}

/// Adapts to one episode and scores it.
pub fn task_outcome(
    state: &LearnerState,
    episode: &Episode,
    measure: Measure,
    first_order: bool,
) -> Result<TaskOutcome> {
    let arch = &state.params.arch;
    let gradient = task_meta_gradient(
        arch,
        &state.params.theta,
        &state.rates,
        episode.support.as_slice(),
        episode.query.as_slice(),
        first_order,
    )?;
    if !gradient.query_loss.is_finite() || !gradient.support_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "task {}: support loss {}, query loss {}",
            episode.task_index, gradient.support_loss, gradient.query_loss
        )));
    }
    let adapted = LearnerParams {
        arch: arch.clone(),
        theta: gradient.adapted.clone(),
    };
    let sets = query_feature_sets(&adapted, episode)?;
    let report = task_hardness(&sets, measure)?;
    Ok(TaskOutcome {
        task_index: episode.task_index,
        hardness: report.hardness,
        gradient,
    })
}

/// Weighted sums of per-task theta- and alpha-gradients.
pub fn combine_meta_gradients(outcomes: &[TaskOutcome], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = outcomes.first().map_or(0, |o| o.gradient.theta.len());
    let mut theta = vec![0.0; p];
    let mut alpha = vec![0.0; p];
    for (o, &w) in outcomes.iter().zip(weights) {
        for (acc, g) in theta.iter_mut().zip(&o.gradient.theta) {
            *acc += w * g;
        }
        for (acc, g) in alpha.iter_mut().zip(&o.gradient.alpha) {
            *acc += w * g;
        }
    }
    (theta, alpha)
}

/// One metrics record per meta-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLog {
    pub batch_index: usize,
    pub first_task_index: usize,
    pub phase: Phase,
    pub schedule: Schedule,
    pub mean_weighted_loss: f64,
    pub mean_hardness: f64,
    pub min_hardness: f64,
    pub max_hardness: f64,
}

impl BatchLog {
    pub const CSV_HEADER: &'static str =
        "batch_index,first_task_index,phase,schedule,mean_weighted_loss,mean_TH,min_TH,max_TH";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.batch_index,
            self.first_task_index,
            self.phase,
            self.schedule,
            self.mean_weighted_loss,
            self.mean_hardness,
            self.min_hardness,
            self.max_hardness
        )
    }
}

pub fn metrics_csv(logs: &[BatchLog]) -> String {
    let mut out = String::from(BatchLog::CSV_HEADER);
    out.push('\n');
    for log in logs {
        out.push_str(&log.to_csv_row());
        out.push('\n');
    }
    out
}

fn check_episode(plan: &TrainPlan, episode: &Episode) -> Result<()> {
    if episode.ways() != plan.ways || episode.shots != plan.shots || episode.queries != plan.queries {
        return Err(Error::InvalidArgument(format!(
            "episode {} is {}-way {}-shot {}-query, plan wants {}/{}/{}",
            episode.task_index,
            episode.ways(),
            episode.shots,
            episode.queries,
            plan.ways,
            plan.shots,
            plan.queries
        )));
    }
    Ok(())
}

/// One reweighted meta-update over a batch of episodes.
///
/// Returns the updated state and the batch record; `batch_index` in the
/// record is left at zero for the caller to fill in.
pub fn meta_batch_step(
    state: &LearnerState,
    episodes: &[Episode],
    plan: &TrainPlan,
    phase: Phase,
) -> Result<(LearnerState, BatchLog)> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("empty meta-batch".into()));
    }
    for e in episodes {
        check_episode(plan, e)?;
    }
    let outcomes = episodes
        .par_iter()
        .map(|e| task_outcome(state, e, plan.measure, plan.first_order))
        .collect::<Result<Vec<_>>>()?;

    let ths: Vec<f64> = outcomes.iter().map(|o| o.hardness).collect();
    let weights = match plan.schedule.weighting_phase(phase) {
        Some(p) => batch_weights(&ths, p)?,
        None => vec![1.0 / ths.len() as f64; ths.len()],
    };
    let (grad_theta, grad_alpha) = combine_meta_gradients(&outcomes, &weights);

    let theta: Vec<f64> = state
        .params
        .theta
        .iter()
        .zip(&grad_theta)
        .map(|(t, g)| t - plan.beta * g)
        .collect();
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!(
            "parameters after batch starting at task {}",
            episodes[0].task_index
        )));
    }
    let rates = match &state.rates {
        InnerRates::PerParam(alpha) => InnerRates::PerParam(
            alpha
                .iter()
                .zip(&grad_alpha)
                .map(|(a, g)| (a - plan.beta * g).max(MIN_INNER_RATE))
                .collect(),
        ),
        fixed => fixed.clone(),
    };

    let weighted_loss: f64 = outcomes
        .iter()
        .zip(&weights)
        .map(|(o, w)| w * o.gradient.query_loss)
        .sum();
    let log = BatchLog {
        batch_index: 0,
        first_task_index: episodes[0].task_index as usize,
        phase,
        schedule: plan.schedule,
        mean_weighted_loss: weighted_loss,
        mean_hardness: ths.iter().sum::<f64>() / ths.len() as f64,
        min_hardness: ths.iter().cloned().fold(f64::INFINITY, f64::min),
        max_hardness: ths.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    let next = LearnerState {
        params: LearnerParams {
            arch: state.params.arch.clone(),
            theta,
        },
        rates,
    };
    Ok((next, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Random,
    Easy,
    Hard,
}

fn need_taxonomy<'a>(tax: Option<&'a Taxonomy>, what: &str) -> Result<&'a Taxonomy> {
    tax.ok_or_else(|| Error::Config(format!("{what} requires a taxonomy")))
}

/// Episode of the given kind drawn from `rng`.
pub fn sample_episode<R: Rng + ?Sized>(
    kind: TaskKind,
    data: &DataDictionary,
    tax: Option<&Taxonomy>,
    (ways, shots, queries): (usize, usize, usize),
    task_index: u64,
    rng: &mut R,
) -> Result<Episode> {
    match kind {
        TaskKind::Random => random_episode(data, ways, shots, queries, task_index, rng),
        TaskKind::Easy => {
            let classes = need_taxonomy(tax, "easy task sampling")?.sample_easy_classes(ways, rng)?;
            build_episode(data, &classes, shots, queries, task_index, rng)
        }
        TaskKind::Hard => {
            let classes = need_taxonomy(tax, "hard task sampling")?.sample_hard_classes(ways, rng)?;
            build_episode(data, &classes, shots, queries, task_index, rng)
        }
    }
}

/// Kind of task the schedule asks for at `task_index`, drawn from `rng` for
/// the probabilistic schedule.
pub fn scheduled_kind<R: Rng + ?Sized>(plan: &TrainPlan, task_index: usize, rng: &mut R) -> Result<TaskKind> {
    let phase = plan.phase_of(task_index)?;
    let target = match phase {
        Phase::Primary => TaskKind::Easy,
        Phase::Advanced => TaskKind::Hard,
    };
    Ok(match plan.schedule {
        Schedule::Uniform | Schedule::Expert | Schedule::Reversed => TaskKind::Random,
        Schedule::SemanticExpert => target,
        Schedule::ProbabilisticEt(p) => {
            if rng.random::<f64>() < p {
                target
            } else if target == TaskKind::Easy {
                TaskKind::Hard
            } else {
                TaskKind::Easy
            }
        }
    })
}

/// Training episode number `task_index`; depends only on the plan's seed and
/// the index.
pub fn select_training_episode(
    task_index: usize,
    plan: &TrainPlan,
    tax: Option<&Taxonomy>,
    data: &DataDictionary,
) -> Result<Episode> {
    if plan.schedule.needs_taxonomy() && tax.is_none() {
        return Err(Error::Config(format!("schedule `{}` requires a taxonomy", plan.schedule)));
    }
    let mut rng = derive_task_rng(plan.seed, task_index as u64);
    let kind = scheduled_kind(plan, task_index, &mut rng)?;
    sample_episode(
        kind,
        data,
        tax,
        (plan.ways, plan.shots, plan.queries),
        task_index as u64,
        &mut rng,
    )
}

/// Freshly initialized state for `plan` on `dim`-dimensional inputs.
pub fn initial_state(plan: &TrainPlan, dim: usize) -> Result<LearnerState> {
    let arch = Architecture::new(dim, plan.hidden.clone(), plan.ways)?;
    let params = arch.init(&mut derive_stream(plan.seed, StreamPurpose::Initialization, 0));
    LearnerState::new(params, plan.meta_mode, plan.alpha)
}

/// Runs all meta-batches of `plan`, handing each batch record to `on_batch`.
pub fn train_with<F: FnMut(&BatchLog)>(
    plan: &TrainPlan,
    data: &DataDictionary,
    tax: Option<&Taxonomy>,
    mut on_batch: F,
) -> Result<LearnerState> {
    plan.validate()?;
    if let Some(tax) = tax {
        data.check_taxonomy(tax)?;
    }
    if plan.schedule.needs_taxonomy() && tax.is_none() {
        return Err(Error::Config(format!("schedule `{}` requires a taxonomy", plan.schedule)));
    }
    let mut state = initial_state(plan, data.dim())?;
    for b in 0..plan.num_batches() {
        let first = b * plan.batch;
        let last = (first + plan.batch).min(plan.tasks);
        let episodes = (first..last)
            .into_par_iter()
            .map(|t| select_training_episode(t, plan, tax, data))
            .collect::<Result<Vec<_>>>()?;
        let phase = plan.phase_of(first)?;
        let (next, mut log) = meta_batch_step(&state, &episodes, plan, phase)?;
        log.batch_index = b;
        on_batch(&log);
        state = next;
    }
    Ok(state)
}

pub fn train(
    plan: &TrainPlan,
    data: &DataDictionary,
    tax: Option<&Taxonomy>,
) -> Result<(LearnerState, Vec<BatchLog>)> {
    let mut logs = Vec::with_capacity(plan.num_batches());
    let state = train_with(plan, data, tax, |log| logs.push(log.clone()))?;
    Ok((state, logs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMode {
    Random,
    AllEasy,
    AllHard,
}

impl TestMode {
    pub fn name(self) -> &'static str {
        match self {
            TestMode::Random => "random",
            TestMode::AllEasy => "all_easy",
            TestMode::AllHard => "all_hard",
        }
    }

    fn kind(self) -> TaskKind {
        match self {
            TestMode::Random => TaskKind::Random,
            TestMode::AllEasy => TaskKind::Easy,
            TestMode::AllHard => TaskKind::Hard,
        }
    }
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(TestMode::Random),
            "all_easy" | "easy" => Ok(TestMode::AllEasy),
            "all_hard" | "hard" => Ok(TestMode::AllHard),
            other => Err(Error::Config(format!("unknown test mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub tasks: usize,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub mode: TestMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single task).
    pub std: f64,
    /// Half-width of the normal-approximation 95% interval of the mean.
    pub ci95: f64,
}

impl EvalResult {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::InvalidArgument("no accuracies".into()));
        }
        let v = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / v;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (v - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(EvalResult {
            ci95: 1.96 * std / v.sqrt(),
            accuracies,
            mean,
            std,
        })
    }

    pub const CSV_HEADER: &'static str = "mode,V,mean_acc,std_acc,ci95";

    pub fn to_csv_row(&self, mode: TestMode) -> String {
        format!(
            "{},{},{},{},{}",
            mode,
            self.accuracies.len(),
            self.mean,
            self.std,
            self.ci95
        )
    }
}

/// Fraction of query examples the adapted learner labels correctly.
pub fn episode_accuracy(state: &LearnerState, episode: &Episode) -> Result<f64> {
    let adapted = state.params.inner_update(&state.rates, &episode.support)?;
    let correct = episode
        .query
        .iter()
        .map(|Example { features, label }| adapted.predict(features).map(|p| p == *label))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();
    Ok(correct as f64 / episode.query.len() as f64)
}

/// Adapts to `settings.tasks` novel tasks and reports query accuracy; no
/// meta-update happens. Test classes should be disjoint from the training
/// classes.
pub fn evaluate(
    state: &LearnerState,
    data: &DataDictionary,
    tax: Option<&Taxonomy>,
    settings: &EvalSettings,
) -> Result<EvalResult> {
    if settings.tasks == 0 {
        return Err(Error::Config("evaluation needs at least one task".into()));
    }
    if settings.mode != TestMode::Random && tax.is_none() {
        return Err(Error::Config(format!("test mode `{}` requires a taxonomy", settings.mode)));
    }
    if settings.ways != state.params.arch.output {
        return Err(Error::Config(format!(
            "learner has {} outputs but evaluation is {}-way",
            state.params.arch.output, settings.ways
        )));
    }
    let accuracies = (0..settings.tasks)
        .into_par_iter()
        .map(|v| {
            let mut rng = derive_stream(settings.seed, StreamPurpose::Evaluation, v as u64);
            let episode = sample_episode(
                settings.mode.kind(),
                data,
                tax,
                (settings.ways, settings.shots, settings.queries),
                v as u64,
                &mut rng,
            )?;
            episode_accuracy(state, &episode)
        })
        .collect::<Result<Vec<f64>>>()?;
    EvalResult::from_accuracies(accuracies)
}
