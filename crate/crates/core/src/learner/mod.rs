//! Fully connected classifier with analytic gradients.
//!
//! Parameters live in one flat vector. Layer `l` maps `in_l -> out_l` and
//! stores its weights row-major (`out_l x in_l`) followed by its `out_l`
//! biases. Hidden layers use rectified-linear activations; the output layer
//! produces logits for softmax cross-entropy.

mod dual;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

pub use dual::{Dual, Scalar};

use crate::episode::Example;
use crate::error::{Error, Result};

/// Smallest inner rate kept after a meta-update of learned rates.
pub const MIN_INNER_RATE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Result<Self> {
        if input == 0 || output == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
        }
        Ok(Architecture {
            input,
            hidden,
            output,
        })
    }

    /// `input -> 64 -> 32 -> ways`.
    pub fn standard(input: usize, ways: usize) -> Result<Self> {
        Architecture::new(input, vec![64, 32], ways)
    }

    /// `(fan_in, fan_out)` of every layer, input side first.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input);
        widths.extend(&self.hidden);
        widths.push(self.output);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Width of the representation fed to the output layer.
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    fn check_params(&self, len: usize) -> Result<()> {
        if len != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: len,
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input {
            return Err(Error::DimensionMismatch {
                expected: self.input,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Post-activation outputs of every layer; the last entry holds the logits.
    fn trace<S: Scalar>(&self, params: &[S], x: &[f64]) -> Vec<Vec<S>> {
        let layers = self.layers();
        let mut acts: Vec<Vec<S>> = Vec::with_capacity(layers.len() + 1);
        acts.push(x.iter().map(|&v| S::constant(v)).collect());
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let weights = &params[offset..offset + fan_in * fan_out];
            let biases = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let prev = &acts[l];
            let last = l + 1 == layers.len();
            let out: Vec<S> = (0..fan_out)
                .map(|o| {
                    let row = &weights[o * fan_in..(o + 1) * fan_in];
                    let mut z = biases[o];
                    for (w, a) in row.iter().zip(prev) {
                        z += *w * *a;
                    }
                    if last {
                        z
                    } else {
                        z.relu()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// Mean softmax cross-entropy and its gradient, over any scalar type.
    fn loss_grad_generic<S: Scalar>(&self, params: &[S], batch: &[Example]) -> Result<(S, Vec<S>)> {
        self.check_params(params.len())?;
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let layers = self.layers();
        let scale = S::constant(1.0 / batch.len() as f64);
        let mut grad = vec![S::zero(); params.len()];
        let mut loss = S::zero();
        for ex in batch {
            self.check_input(&ex.features)?;
            if ex.label >= self.output {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    classes: self.output,
                });
            }
            let acts = self.trace(params, &ex.features);
            let logits = acts.last().expect("at least one layer");

            let top = logits
                .iter()
                .map(|z| z.value())
                .fold(f64::NEG_INFINITY, f64::max);
            let shift = S::constant(top);
            let exps: Vec<S> = logits.iter().map(|&z| (z - shift).exp()).collect();
            let mut total = S::zero();
            for &e in &exps {
                total += e;
            }
            loss += (total.ln() + shift - logits[ex.label]) * scale;

            // d loss / d logits = softmax - onehot
            let mut delta: Vec<S> = exps
                .iter()
                .enumerate()
                .map(|(k, &e)| {
                    let p = e / total;
                    let t = if k == ex.label { p - S::constant(1.0) } else { p };
                    t * scale
                })
                .collect();

            let mut end = params.len();
            for l in (0..layers.len()).rev() {
                let (fan_in, fan_out) = layers[l];
                let w_start = end - fan_out - fan_in * fan_out;
                let b_start = end - fan_out;
                let input = &acts[l];
                for o in 0..fan_out {
                    grad[b_start + o] += delta[o];
                    let g_row = &mut grad[w_start + o * fan_in..w_start + (o + 1) * fan_in];
                    for (g, &a) in g_row.iter_mut().zip(input) {
                        *g += delta[o] * a;
                    }
                }
                if l > 0 {
                    let mut back = vec![S::zero(); fan_in];
                    for o in 0..fan_out {
                        let row = &params[w_start + o * fan_in..w_start + (o + 1) * fan_in];
                        for (b, &w) in back.iter_mut().zip(row) {
                            *b += w * delta[o];
                        }
                    }
                    // Rectifier gate: activations are zero exactly where the unit is off.
                    for (b, a) in back.iter_mut().zip(input) {
                        if a.value() <= 0.0 {
                            *b = S::zero();
                        }
                    }
                    delta = back;
                }
                end = w_start;
            }
        }
        Ok((loss, grad))
    }

    /// Random initial parameters: weights uniform in `±1/sqrt(fan_in)`, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> LearnerParams {
        let mut theta = Vec::with_capacity(self.num_params());
        for (fan_in, fan_out) in self.layers() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            theta.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)));
            theta.extend(std::iter::repeat_n(0.0, fan_out));
        }
        LearnerParams {
            arch: self.clone(),
            theta,
        }
    }
}

/// A differentiable training objective over flat parameter vectors.
pub trait Objective {
    type Batch: ?Sized;

    fn num_params(&self) -> usize;

    fn loss_and_grad(&self, params: &[f64], batch: &Self::Batch) -> Result<(f64, Vec<f64>)>;

    /// Exact Hessian of the batch loss applied to `v`.
    fn hessian_vec(&self, params: &[f64], batch: &Self::Batch, v: &[f64]) -> Result<Vec<f64>>;
}

impl Objective for Architecture {
    type Batch = [Example];

    fn num_params(&self) -> usize {
        Architecture::num_params(self)
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        self.loss_grad_generic(params, batch)
    }

    fn hessian_vec(&self, params: &[f64], batch: &[Example], v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: v.len(),
            });
        }
        let duals: Vec<Dual> = params.iter().zip(v).map(|(&p, &d)| Dual::new(p, d)).collect();
        let (_, grad) = self.loss_grad_generic(&duals, batch)?;
        Ok(grad.into_iter().map(|g| g.eps).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

impl LearnerParams {
    pub fn new(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        arch.check_params(theta.len())?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(LearnerParams { arch, theta })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let theta = vec![0.0; arch.num_params()];
        LearnerParams { arch, theta }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.arch.check_input(x)?;
        Ok(self.arch.trace(&self.theta, x).pop().expect("at least one layer"))
    }

    /// Activations of the last hidden layer (the input itself for a network
    /// without hidden layers).
    pub fn extract_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.arch.check_input(x)?;
        let mut acts = self.arch.trace(&self.theta, x);
        acts.pop();
        Ok(acts.pop().expect("input layer"))
    }

    /// Logits from a feature vector produced by [`Self::extract_features`].
    pub fn output_layer(&self, features: &[f64]) -> Result<Vec<f64>> {
        let (fan_in, fan_out) = *self.arch.layers().last().expect("at least one layer");
        if features.len() != fan_in {
            return Err(Error::DimensionMismatch {
                expected: fan_in,
                got: features.len(),
            });
        }
        let start = self.theta.len() - fan_out - fan_in * fan_out;
        let weights = &self.theta[start..start + fan_in * fan_out];
        let biases = &self.theta[start + fan_in * fan_out..];
        Ok((0..fan_out)
            .map(|o| {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                biases[o] + row.iter().zip(features).map(|(w, f)| w * f).sum::<f64>()
            })
            .collect())
    }

    pub fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        self.arch.loss_grad_generic(&self.theta, batch)
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let logits = self.forward(x)?;
        let mut best = 0;
        for (k, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// One gradient step on `support`: `theta - alpha * grad`.
    pub fn inner_update(&self, rates: &InnerRates, support: &[Example]) -> Result<LearnerParams> {
        let (_, grad) = self.loss_and_grad(support)?;
        let theta = rates.step(&self.theta, &grad)?;
        Ok(LearnerParams {
            arch: self.arch.clone(),
            theta,
        })
    }
}

/// Inner-loop step sizes: one shared rate, or one rate per parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerRates {
    Scalar(f64),
    PerParam(Vec<f64>),
}

impl InnerRates {
    pub fn validate(&self, num_params: usize) -> Result<()> {
        let ok = match self {
            InnerRates::Scalar(a) => a.is_finite() && *a >= 0.0,
            InnerRates::PerParam(v) => {
                if v.len() != num_params {
                    return Err(Error::DimensionMismatch {
                        expected: num_params,
                        got: v.len(),
                    });
                }
                v.iter().all(|a| a.is_finite() && *a >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("inner rates must be finite and non-negative".into()))
        }
    }

    pub fn rate(&self, k: usize) -> f64 {
        match self {
            InnerRates::Scalar(a) => *a,
            InnerRates::PerParam(v) => v[k],
        }
    }

    /// `theta - alpha ⊙ grad`.
    pub fn step(&self, theta: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: grad.len(),
            });
        }
        self.validate(theta.len())?;
        Ok(theta
            .iter()
            .zip(grad)
            .enumerate()
            .map(|(k, (t, g))| t - self.rate(k) * g)
            .collect())
    }

    /// `alpha ⊙ v`.
    pub fn scale(&self, v: &[f64]) -> Vec<f64> {
        v.iter().enumerate().map(|(k, x)| self.rate(k) * x).collect()
    }
}

/// How inner rates are treated during meta-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaMode {
    /// One fixed scalar rate.
    Maml,
    /// Per-parameter rates learned with the initialization.
    MetaSgd,
}

impl MetaMode {
    pub fn name(self) -> &'static str {
        match self {
            MetaMode::Maml => "maml",
            MetaMode::MetaSgd => "metasgd",
        }
    }
}

impl fmt::Display for MetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "maml" | "maml_fixed" => Ok(MetaMode::Maml),
            "metasgd" | "meta_sgd" => Ok(MetaMode::MetaSgd),
            other => Err(Error::Config(format!("unknown meta mode `{other}`"))),
        }
    }
}

/// Meta-learned state: initialization plus inner rates.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub params: LearnerParams,
    pub rates: InnerRates,
}

const CHECKPOINT_MAGIC: &str = "hardmeta-checkpoint v1";

impl LearnerState {
    pub fn new(params: LearnerParams, mode: MetaMode, alpha: f64) -> Result<Self> {
        let rates = match mode {
            MetaMode::Maml => InnerRates::Scalar(alpha),
            MetaMode::MetaSgd => InnerRates::PerParam(vec![alpha; params.theta.len()]),
        };
        rates.validate(params.theta.len())?;
        Ok(LearnerState { params, rates })
    }

    pub fn mode(&self) -> MetaMode {
        match self.rates {
            InnerRates::Scalar(_) => MetaMode::Maml,
            InnerRates::PerParam(_) => MetaMode::MetaSgd,
        }
    }

    /// Text checkpoint:
    ///
    /// ```text
    /// hardmeta-checkpoint v1
    /// arch,<input>,<hidden...>,<output>
    /// alpha,scalar,<a>            | alpha,per_param,<a_1>,...,<a_P>
    /// theta,<t_1>,...,<t_P>
    /// ```
    ///
    /// Floats use the shortest representation that parses back exactly.
    pub fn to_checkpoint(&self) -> String {
        let arch = &self.params.arch;
        let mut out = format!("{CHECKPOINT_MAGIC}\narch,{}", arch.input);
        for h in &arch.hidden {
            out.push_str(&format!(",{h}"));
        }
        out.push_str(&format!(",{}\n", arch.output));
        match &self.rates {
            InnerRates::Scalar(a) => out.push_str(&format!("alpha,scalar,{a}\n")),
            InnerRates::PerParam(v) => {
                out.push_str("alpha,per_param");
                push_values(&mut out, v);
            }
        }
        out.push_str("theta");
        push_values(&mut out, &self.params.theta);
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        match lines.next() {
            Some((_, l)) if l == CHECKPOINT_MAGIC => {}
            Some((n, _)) => return Err(Error::format(n, "not a checkpoint file")),
            None => return Err(Error::Empty("checkpoint file is empty".into())),
        }
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::Empty(format!("checkpoint is missing `{key}`")))?;
            let mut fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields.first().map(String::as_str) != Some(key) {
                return Err(Error::format(n, format!("expected `{key}` record")));
            }
            fields.remove(0);
            Ok((n, fields))
        };

        let (n, widths) = next("arch")?;
        let widths = parse_list::<usize>(n, &widths)?;
        if widths.len() < 2 {
            return Err(Error::format(n, "architecture needs input and output widths"));
        }
        let arch = Architecture::new(
            widths[0],
            widths[1..widths.len() - 1].to_vec(),
            widths[widths.len() - 1],
        )?;

        let (n, alpha) = next("alpha")?;
        let rates = match alpha.first().map(String::as_str) {
            Some("scalar") if alpha.len() == 2 => InnerRates::Scalar(parse_list::<f64>(n, &alpha[1..])?[0]),
            Some("per_param") => InnerRates::PerParam(parse_list::<f64>(n, &alpha[1..])?),
            _ => return Err(Error::format(n, "expected `alpha,scalar,<a>` or `alpha,per_param,...`")),
        };

        let (n, theta) = next("theta")?;
        let theta = parse_list::<f64>(n, &theta)?;
        let params = LearnerParams::new(arch, theta).map_err(|e| Error::format(n, e.to_string()))?;
        rates
            .validate(params.theta.len())
            .map_err(|e| Error::format(n, e.to_string()))?;
        Ok(LearnerState { params, rates })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_checkpoint()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        LearnerState::from_checkpoint(&text)
    }
}

fn push_values(out: &mut String, values: &[f64]) {
    for v in values {
        out.push(',');
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

fn parse_list<T: FromStr>(line: usize, fields: &[String]) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| {
            f.trim()
                .parse::<T>()
                .map_err(|_| Error::format(line, format!("cannot parse `{f}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_task_rng;
    use rand::Rng;

    fn random_batch<R: Rng>(arch: &Architecture, size: usize, rng: &mut R) -> Vec<Example> {
        (0..size)
            .map(|_| Example {
                features: (0..arch.input).map(|_| rng.random_range(-1.5..1.5)).collect(),
                label: rng.random_range(0..arch.output),
            })
            .collect()
    }

    fn random_params<R: Rng>(arch: &Architecture, rng: &mut R) -> LearnerParams {
        let mut p = arch.init(rng);
        for t in p.theta.iter_mut() {
            *t += rng.random_range(-0.3..0.3);
        }
        p
    }

    #[test]
    fn parameter_count() {
        let arch = Architecture::standard(16, 5).unwrap();
        assert_eq!(arch.num_params(), 16 * 64 + 64 + 64 * 32 + 32 + 32 * 5 + 5);
        assert_eq!(arch.feature_dim(), 32);
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let p = LearnerParams::zeros(Architecture::standard(3, 4).unwrap());
        assert_eq!(p.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn single_layer_reads_weight_column() {
        let arch = Architecture::new(2, vec![], 3).unwrap();
        // rows: (1,2), (3,4), (5,6); biases 0.1, 0.2, 0.3
        let theta = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.1, 0.2, 0.3];
        let p = LearnerParams::new(arch, theta).unwrap();
        assert_eq!(p.forward(&[1.0, 0.0]).unwrap(), vec![1.1, 3.2, 5.3]);
        assert_eq!(p.forward(&[1.0, 0.0]).unwrap(), p.forward(&[1.0, 0.0]).unwrap());
        assert!(matches!(p.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn features_shape_and_prefix_identity() {
        let arch = Architecture::new(4, vec![6, 8], 3).unwrap();
        let p = random_params(&arch, &mut derive_task_rng(1, 0));
        let x = [0.3, -0.2, 1.0, 0.7];
        let g = p.extract_features(&x).unwrap();
        assert_eq!(g.len(), 8);
        let direct = p.forward(&x).unwrap();
        let via = p.output_layer(&g).unwrap();
        for (a, b) in direct.iter().zip(&via) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_weights_features_are_rectified_bias() {
        let arch = Architecture::new(2, vec![3], 2).unwrap();
        let mut p = LearnerParams::zeros(arch);
        // hidden biases at offsets 6..9
        p.theta[6] = 0.5;
        p.theta[7] = -0.5;
        p.theta[8] = 2.0;
        assert_eq!(p.extract_features(&[9.0, -9.0]).unwrap(), vec![0.5, 0.0, 2.0]);
    }

    #[test]
    fn uniform_logits_give_log_n() {
        let p = LearnerParams::zeros(Architecture::standard(3, 5).unwrap());
        let batch = vec![
            Example { features: vec![1.0, 2.0, 3.0], label: 2 },
            Example { features: vec![0.0, 0.0, 1.0], label: 4 },
        ];
        let (loss, _) = p.loss_and_grad(&batch).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_give_vanishing_loss() {
        let arch = Architecture::new(1, vec![], 2).unwrap();
        // logit_k = w_k x: class 0 strongly favoured for x = 1.
        let p = LearnerParams::new(arch, vec![200.0, -200.0, 0.0, 0.0]).unwrap();
        let batch = vec![Example { features: vec![1.0], label: 0 }];
        let (loss, _) = p.loss_and_grad(&batch).unwrap();
        assert!(loss < 1e-100);
    }

    #[test]
    fn bad_labels_and_empty_batches() {
        let p = LearnerParams::zeros(Architecture::new(1, vec![2], 2).unwrap());
        let bad = vec![Example { features: vec![1.0], label: 2 }];
        assert!(matches!(p.loss_and_grad(&bad), Err(Error::LabelOutOfRange { .. })));
        assert!(p.loss_and_grad(&[]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = derive_task_rng(42, 0);
        for _ in 0..10 {
            let arch = Architecture::new(
                rng.random_range(1..5),
                vec![rng.random_range(1..6), rng.random_range(1..5)],
                rng.random_range(2..5),
            )
            .unwrap();
            let p = random_params(&arch, &mut rng);
            let batch = random_batch(&arch, rng.random_range(1..6), &mut rng);
            let (_, grad) = p.loss_and_grad(&batch).unwrap();
            let h = 1e-5;
            let fd: Vec<f64> = (0..p.theta.len())
                .map(|k| {
                    let mut up = p.clone();
                    up.theta[k] += h;
                    let mut down = p.clone();
                    down.theta[k] -= h;
                    (up.loss_and_grad(&batch).unwrap().0 - down.loss_and_grad(&batch).unwrap().0) / (2.0 * h)
                })
                .collect();
            let err: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(err <= 1e-4 * norm.max(1e-8), "err {err} norm {norm}");
        }
    }

    #[test]
    fn hessian_vector_matches_gradient_differences() {
        let mut rng = derive_task_rng(43, 0);
        let arch = Architecture::new(3, vec![4], 3).unwrap();
        let p = random_params(&arch, &mut rng);
        let batch = random_batch(&arch, 4, &mut rng);
        let v: Vec<f64> = (0..p.theta.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = arch.hessian_vec(&p.theta, &batch, &v).unwrap();
        let h = 1e-5;
        let shifted = |s: f64| {
            let t: Vec<f64> = p.theta.iter().zip(&v).map(|(t, d)| t + s * d).collect();
            arch.loss_and_grad(&t, &batch).unwrap().1
        };
        let (gp, gm) = (shifted(h), shifted(-h));
        for (k, x) in hv.iter().enumerate() {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            assert!((x - fd).abs() < 1e-6, "k={k}: {x} vs {fd}");
        }
    }

    #[test]
    fn inner_update_arithmetic() {
        let rates = InnerRates::Scalar(0.1);
        assert_eq!(rates.step(&[1.0], &[0.5]).unwrap(), vec![0.95]);
        assert_eq!(InnerRates::Scalar(0.0).step(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(rates.step(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        let per = InnerRates::PerParam(vec![0.1, 0.2]);
        assert_eq!(per.step(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), vec![0.9, 0.8]);
        assert!(InnerRates::Scalar(-1.0).step(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let arch = Architecture::new(3, vec![4, 2], 2).unwrap();
        let params = random_params(&arch, &mut derive_task_rng(5, 5));
        for mode in [MetaMode::Maml, MetaMode::MetaSgd] {
            let state = LearnerState::new(params.clone(), mode, 0.01).unwrap();
            let back = LearnerState::from_checkpoint(&state.to_checkpoint()).unwrap();
            assert_eq!(back, state);
            assert_eq!(back.mode(), mode);
        }
        assert!(LearnerState::from_checkpoint("nonsense").is_err());
        assert!(LearnerState::from_checkpoint("").is_err());
        let truncated = "hardmeta-checkpoint v1\narch,1,1\nalpha,scalar,0.1\ntheta,1.0\n";
        assert!(matches!(
            LearnerState::from_checkpoint(truncated),
            Err(Error::Format { line: 4, .. })
        ));
    }
}
