//! Brute-force reference implementations and helpers shared by the
//! integration tests. The hardness oracles use no library code.

#![allow(dead_code)]

use hardmeta::episode::Example;
use hardmeta::hardness::ClassFeatureSet;
use hardmeta::learner::{Architecture, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Points = Vec<Vec<f64>>;

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..x.len() {
        s += (x[k] - y[k]) * (x[k] - y[k]);
    }
    s.sqrt()
}

/// Root of the mean squared distance over all cross pairs.
pub fn oracle_pairwise(a: &Points, b: &Points) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            let d = euclid(x, y);
            total += d * d;
        }
    }
    (total / (a.len() * b.len()) as f64).sqrt()
}

fn directed_hausdorff(a: &Points, b: &Points) -> f64 {
    let mut worst: f64 = 0.0;
    for x in a {
        let mut nearest = f64::INFINITY;
        for y in b {
            nearest = nearest.min(euclid(x, y));
        }
        worst = worst.max(nearest);
    }
    worst
}

pub fn oracle_hausdorff(a: &Points, b: &Points) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn matmul(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let m = y[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for k in 0..y.len() {
                out[i][j] += x[i][k] * y[k][j];
            }
        }
    }
    out
}

fn gram(g: &Points) -> Vec<Vec<f64>> {
    g.iter()
        .map(|r| g.iter().map(|s| r.iter().zip(s).map(|(u, v)| u * v).sum()).collect())
        .collect()
}

/// `tr(K_a H K_b H)` with explicit Q x Q matrices.
pub fn oracle_hsic(a: &Points, b: &Points) -> f64 {
    let q = a.len();
    assert_eq!(q, b.len());
    let h: Vec<Vec<f64>> = (0..q)
        .map(|i| (0..q).map(|j| f64::from(u8::from(i == j)) - 1.0 / q as f64).collect())
        .collect();
    let m = matmul(&matmul(&matmul(&gram(a), &h), &gram(b)), &h);
    (0..q).map(|i| m[i][i]).sum()
}

/// Relation matrix and hardness by exhaustive pair loops.
pub fn oracle_task(sets: &[Points], measure: &str) -> (Vec<Vec<f64>>, f64) {
    let n = sets.len();
    let mut rel = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                rel[i][j] = match measure {
                    "pairwise" => oracle_pairwise(&sets[i], &sets[j]),
                    "hausdorff" => oracle_hausdorff(&sets[i], &sets[j]),
                    "hsic" => oracle_hsic(&sets[i], &sets[j]),
                    _ => unreachable!(),
                };
            }
        }
    }
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| rel[i][j])
        .collect();
    let th = if measure == "hsic" {
        off.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(1e-12)
    } else {
        1.0 / off.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-12)
    };
    (rel, th)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    let scale = got.abs().max(want.abs());
    if scale == 0.0 {
        0.0
    } else {
        (got - want).abs() / scale
    }
}

/// Norm-wise relative difference of two vectors.
pub fn vec_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff: f64 = got.iter().zip(want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = norm(got).max(norm(want));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn random_points<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Points {
    (0..rows)
        .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

pub fn to_sets(points: &[Points]) -> Vec<ClassFeatureSet> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| ClassFeatureSet::new(format!("c{i}"), p.clone()).unwrap())
        .collect()
}

/// Central difference of `f` along every coordinate of `x`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Labelled examples with every class present.
pub fn random_batch<R: Rng>(rng: &mut R, dim: usize, classes: usize, per_class: usize) -> Vec<Example> {
    (0..classes)
        .flat_map(|label| (0..per_class).map(move |_| label))
        .map(|label| Example {
            features: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            label,
        })
        .collect()
}

pub struct Config {
    pub arch: Architecture,
    pub theta: Vec<f64>,
    pub support: Vec<Example>,
    pub query: Vec<Example>,
}

/// Small random network with support and query batches.
pub fn random_config(seed: u64) -> Config {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(1..=5);
    let depth = rng.random_range(0..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
    let output = rng.random_range(2..=4);
    let arch = Architecture::new(input, hidden, output).unwrap();
    let mut theta = arch.init(&mut rng).theta;
    // Nonzero biases keep ReLU units away from exact kinks.
    for t in theta.iter_mut() {
        *t += rng.random_range(-0.3..0.3);
    }
    let (ks, kq) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let support = random_batch(&mut rng, input, output, ks);
    let query = random_batch(&mut rng, input, output, kq);
    Config {
        arch,
        theta,
        support,
        query,
    }
}

pub fn loss(arch: &Architecture, theta: &[f64], batch: &[Example]) -> f64 {
    arch.loss_and_grad(theta, batch).unwrap().0
}

/// Query loss after one inner step from `theta` with per-parameter `alpha`.
pub fn two_level(arch: &Architecture, theta: &[f64], alpha: &[f64], support: &[Example], query: &[Example]) -> f64 {
    let (_, g) = arch.loss_and_grad(theta, support).unwrap();
    let adapted: Vec<f64> = theta.iter().zip(alpha).zip(&g).map(|((t, a), g)| t - a * g).collect();
    loss(arch, &adapted, query)
}
