mod common;

use common::*;
use hardmeta::episode::Example;
use hardmeta::learner::{Architecture, InnerRates, LearnerParams, Objective};
use hardmeta::metatrain::task_meta_gradient;
use hardmeta::toy::{Coupled2d, Quadratic1d};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

#[test]
fn learner_gradient_matches_differences() {
    for seed in 0..60 {
        let c = random_config(seed);
        let (_, analytic) = c.arch.loss_and_grad(&c.theta, &c.support).unwrap();
        let numeric = central_diff(|t| loss(&c.arch, t, &c.support), &c.theta, STEP);
        let err = vec_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "config {seed}: relative error {err}");
    }
}

#[test]
fn alpha_gradient_matches_differences() {
    for seed in 100..160 {
        let c = random_config(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha: Vec<f64> = (0..c.theta.len()).map(|_| rng.random_range(0.01..0.3)).collect();
        let rates = InnerRates::PerParam(alpha.clone());
        let g = task_meta_gradient(&c.arch, &c.theta, &rates, c.support.as_slice(), c.query.as_slice(), true)
            .unwrap();
        let numeric = central_diff(|a| two_level(&c.arch, &c.theta, a, &c.support, &c.query), &alpha, STEP);
        let err = vec_rel_err(&g.alpha, &numeric);
        assert!(err < 1e-4, "config {seed}: relative error {err}");
    }
}

#[test]
fn exact_meta_gradient_on_small_networks() {
    for seed in 200..230 {
        let c = random_config(seed);
        let alpha = vec![0.1; c.theta.len()];
        let rates = InnerRates::PerParam(alpha.clone());
        let g = task_meta_gradient(&c.arch, &c.theta, &rates, c.support.as_slice(), c.query.as_slice(), false)
            .unwrap();
        let numeric = central_diff(|t| two_level(&c.arch, t, &alpha, &c.support, &c.query), &c.theta, STEP);
        let err = vec_rel_err(&g.theta, &numeric);
        assert!(err < 1e-4, "config {seed}: relative error {err}");
    }
}

#[test]
fn hessian_vector_product_matches_gradient_differences() {
    for seed in 300..320 {
        let c = random_config(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..c.theta.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = c.arch.hessian_vec(&c.theta, &c.support, &v).unwrap();
        let shifted = |s: f64| -> Vec<f64> {
            let t: Vec<f64> = c.theta.iter().zip(&v).map(|(t, v)| t + s * v).collect();
            c.arch.loss_and_grad(&t, &c.support).unwrap().1
        };
        let (up, down) = (shifted(STEP), shifted(-STEP));
        let numeric: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * STEP)).collect();
        let err = vec_rel_err(&hv, &numeric);
        assert!(err < 1e-4, "config {seed}: relative error {err}");
    }
}

#[test]
fn exact_meta_gradient_on_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let theta = [rng.random_range(-3.0..3.0)];
        let a = rng.random_range(0.01..0.45);
        let (cs, cq) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let rates = InnerRates::Scalar(a);
        let g = task_meta_gradient(&Quadratic1d, &theta, &rates, &cs, &cq, false).unwrap();
        let f = |t: &[f64]| {
            let adapted = t[0] - a * 2.0 * (t[0] - cs);
            (adapted - cq).powi(2)
        };
        let numeric = central_diff(f, &theta, STEP);
        assert!(rel_err(g.theta[0], numeric[0]) < 1e-4, "{} vs {}", g.theta[0], numeric[0]);
        // first order keeps only the outer factor
        let fo = task_meta_gradient(&Quadratic1d, &theta, &rates, &cs, &cq, true).unwrap();
        assert!(rel_err(fo.theta[0] * (1.0 - 2.0 * a), g.theta[0]) < 1e-12);
    }
}

#[test]
fn exact_meta_gradient_on_coupled_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let theta = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let alpha = [rng.random_range(0.005..0.05), rng.random_range(0.005..0.05)];
        let support = [rng.random_range(-2.0..2.0), rng.random_range(0.0..0.5)];
        let query = [rng.random_range(-2.0..2.0), rng.random_range(0.0..0.5)];
        let rates = InnerRates::PerParam(alpha.to_vec());
        let g = task_meta_gradient(&Coupled2d, &theta, &rates, &support, &query, false).unwrap();
        let outer = |t: &[f64], a: &[f64]| {
            let (_, gs) = Coupled2d.loss_and_grad(t, &support).unwrap();
            let adapted = [t[0] - a[0] * gs[0], t[1] - a[1] * gs[1]];
            Coupled2d.loss_and_grad(&adapted, &query).unwrap().0
        };
        let by_theta = central_diff(|t| outer(t, &alpha), &theta, STEP);
        let by_alpha = central_diff(|a| outer(&theta, a), &alpha, STEP);
        assert!(vec_rel_err(&g.theta, &by_theta) < 1e-4, "{:?} vs {by_theta:?}", g.theta);
        assert!(vec_rel_err(&g.alpha, &by_alpha) < 1e-4, "{:?} vs {by_alpha:?}", g.alpha);
    }
}

#[test]
fn loss_ignores_a_shared_logit_shift() {
    for seed in 400..420 {
        let c = random_config(seed);
        let base = loss(&c.arch, &c.theta, &c.query);
        // The output biases are the last `output` parameters.
        let mut shifted = c.theta.clone();
        let n = shifted.len();
        for b in &mut shifted[n - c.arch.output..] {
            *b += 3.7;
        }
        assert!((loss(&c.arch, &shifted, &c.query) - base).abs() < 1e-10);
    }
}

#[test]
fn small_inner_step_does_not_raise_support_loss() {
    for seed in 500..520 {
        let c = random_config(seed);
        let params = LearnerParams::new(c.arch.clone(), c.theta.clone()).unwrap();
        let before = params.loss_and_grad(&c.support).unwrap().0;
        let after = params
            .inner_update(&InnerRates::Scalar(1e-4), &c.support)
            .unwrap()
            .loss_and_grad(&c.support)
            .unwrap()
            .0;
        assert!(after <= before, "config {seed}: {before} -> {after}");
    }
}

#[test]
fn extreme_logits_stay_finite() {
    let arch = Architecture::new(1, vec![], 3).unwrap();
    let theta = vec![1e3, -1e3, 0.0, 0.0, 0.0, 0.0];
    let batch = vec![Example {
        features: vec![5.0],
        label: 1,
    }];
    let (l, g) = arch.loss_and_grad(&theta, &batch).unwrap();
    assert!((l - 1e4).abs() < 1e-6, "{l}");
    assert!(g.iter().all(|x| x.is_finite()));
}
