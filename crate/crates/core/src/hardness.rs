//! Task hardness from class feature sets.
//!
//! A task is as hard as its two least distinguishable classes: distance
//! measures score `1 / min distance`, HSIC scores `max HSIC`. Scores are then
//! mapped per training phase and normalized into per-task loss weights.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Floor applied to the minimum distance and to hardness scores.
pub const HARDNESS_FLOOR: f64 = 1e-12;

/// Rows are samples, all of the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFeatureSet {
    pub class_id: String,
    rows: Vec<Vec<f64>>,
}

impl ClassFeatureSet {
    pub fn new(class_id: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let class_id = class_id.into();
        let width = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument(format!("class `{class_id}` has no feature rows")))?;
        for row in &rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of class `{class_id}`")));
            }
        }
        Ok(ClassFeatureSet { class_id, rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for row in &self.rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Mean squared distance of the rows to their centroid.
    fn spread(&self, mean: &[f64]) -> f64 {
        let total: f64 = self.rows.iter().map(|r| squared_distance(r, mean)).sum();
        total / self.rows.len() as f64
    }

    fn centered(&self) -> Vec<Vec<f64>> {
        let mean = self.mean();
        self.rows
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn same_dim(a: &ClassFeatureSet, b: &ClassFeatureSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Root mean squared Euclidean distance over all cross-set pairs.
///
/// Uses the decomposition
/// `mean ||a_s - b_t||^2 = ||mean(a) - mean(b)||^2 + spread(a) + spread(b)`,
/// whose terms are all non-negative.
pub fn dist_pairwise(a: &ClassFeatureSet, b: &ClassFeatureSet) -> Result<f64> {
    same_dim(a, b)?;
    let (ma, mb) = (a.mean(), b.mean());
    let total = squared_distance(&ma, &mb) + a.spread(&ma) + b.spread(&mb);
    Ok(total.sqrt())
}

/// Largest distance from a point of `from` to its nearest point of `to`.
fn directed_hausdorff_sq(from: &ClassFeatureSet, to: &ClassFeatureSet) -> f64 {
    let mut worst = 0.0_f64;
    for p in from.rows() {
        let mut nearest = f64::INFINITY;
        for r in to.rows() {
            let d = squared_distance(p, r);
            if d < nearest {
                nearest = d;
                // p cannot raise the max any more.
                if nearest <= worst {
                    break;
                }
            }
        }
        worst = worst.max(nearest);
    }
    worst
}

/// Symmetric Hausdorff distance with the Euclidean point metric.
pub fn dist_hausdorff(a: &ClassFeatureSet, b: &ClassFeatureSet) -> Result<f64> {
    same_dim(a, b)?;
    Ok(directed_hausdorff_sq(a, b).max(directed_hausdorff_sq(b, a)).sqrt())
}

/// `tr(K_a H K_b H)` with linear kernels `K = G G^T` and the centering
/// matrix `H = I - 11^T / Q`, without further normalization.
///
/// Since `H K H = (HG)(HG)^T`, the trace equals `||(HG_a)^T (HG_b)||_F^2`,
/// which is what is computed here.
pub fn hsic(a: &ClassFeatureSet, b: &ClassFeatureSet) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::RowCountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (ca, cb) = (a.centered(), b.centered());
    let mut cross = vec![0.0; a.dim() * b.dim()];
    for (ra, rb) in ca.iter().zip(&cb) {
        for (i, x) in ra.iter().enumerate() {
            let row = &mut cross[i * b.dim()..(i + 1) * b.dim()];
            for (c, y) in row.iter_mut().zip(rb) {
                *c += x * y;
            }
        }
    }
    Ok(cross.iter().map(|c| c * c).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    PairwiseEuclidean,
    Hausdorff,
    Hsic,
}

impl Measure {
    pub fn relation(self, a: &ClassFeatureSet, b: &ClassFeatureSet) -> Result<f64> {
        match self {
            Measure::PairwiseEuclidean => dist_pairwise(a, b),
            Measure::Hausdorff => dist_hausdorff(a, b),
            Measure::Hsic => hsic(a, b),
        }
    }

    pub fn is_distance(self) -> bool {
        !matches!(self, Measure::Hsic)
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::PairwiseEuclidean => "pairwise",
            Measure::Hausdorff => "hausdorff",
            Measure::Hsic => "hsic",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pairwise" | "euclidean" | "pairwise_euclidean" => Ok(Measure::PairwiseEuclidean),
            "hausdorff" => Ok(Measure::Hausdorff),
            "hsic" => Ok(Measure::Hsic),
            other => Err(Error::Config(format!("unknown measure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardnessReport {
    pub measure: Measure,
    /// Symmetric `N x N` relation matrix; the diagonal is left at zero.
    pub relations: Vec<Vec<f64>>,
    /// Pair `(i, j)`, `i < j`, that decided the score.
    pub decisive_pair: (usize, usize),
    pub hardness: f64,
}

/// Scores a task from its per-class feature sets.
///
/// Ties between pairs go to the first pair in `(0,1), (0,2), ..., (1,2), ...`
/// order.
pub fn task_hardness(sets: &[ClassFeatureSet], measure: Measure) -> Result<HardnessReport> {
    let n = sets.len();
    if n < 2 {
        return Err(Error::InvalidArgument("task hardness needs at least 2 classes".into()));
    }
    let mut relations = vec![vec![0.0; n]; n];
    let mut best: Option<((usize, usize), f64)> = None;
    for i in 0..n {
        for j in i + 1..n {
            let r = measure.relation(&sets[i], &sets[j])?;
            relations[i][j] = r;
            relations[j][i] = r;
            let better = match best {
                None => true,
                Some((_, b)) if measure.is_distance() => r < b,
                Some((_, b)) => r > b,
            };
            if better {
                best = Some(((i, j), r));
            }
        }
    }
    let (decisive_pair, extreme) = best.expect("n >= 2 gives at least one pair");
    let hardness = if measure.is_distance() {
        1.0 / extreme.max(HARDNESS_FLOOR)
    } else {
        extreme.max(HARDNESS_FLOOR)
    };
    Ok(HardnessReport {
        measure,
        relations,
        decisive_pair,
        hardness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Primary,
    Advanced,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Primary => "primary",
            Phase::Advanced => "advanced",
        }
    }

    pub fn swapped(self) -> Phase {
        match self {
            Phase::Primary => Phase::Advanced,
            Phase::Advanced => Phase::Primary,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_score(th: f64) -> Result<()> {
    if !th.is_finite() {
        return Err(Error::NonFinite(format!("hardness score {th}")));
    }
    if th <= 0.0 {
        return Err(Error::InvalidArgument(format!("hardness score must be > 0, got {th}")));
    }
    Ok(())
}

/// `1 / th` in the primary phase, `th` in the advanced phase.
pub fn phase_transform(th: f64, phase: Phase) -> Result<f64> {
    check_score(th)?;
    Ok(match phase {
        Phase::Primary => 1.0 / th,
        Phase::Advanced => th,
    })
}

/// Normalized per-task weights of one batch.
pub fn batch_weights(ths: &[f64], phase: Phase) -> Result<Vec<f64>> {
    if ths.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mapped = ths
        .iter()
        .map(|&th| phase_transform(th, phase))
        .collect::<Result<Vec<f64>>>()?;
    // Divide by the largest term first so 1/floor-sized scores cannot overflow the sum.
    let top = mapped.iter().cloned().fold(0.0_f64, f64::max);
    let scaled: Vec<f64> = mapped.iter().map(|m| m / top).collect();
    let total: f64 = scaled.iter().sum();
    Ok(scaled.iter().map(|s| s / total).collect())
}
