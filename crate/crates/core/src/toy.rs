//! Closed-form objectives with hand-derived gradients and Hessians, for
//! checking meta-gradients on problems small enough to difference exactly.

use crate::error::{Error, Result};
use crate::learner::Objective;

/// `(t - c)^2` on one parameter; the batch is the target `c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic1d;

impl Objective for Quadratic1d {
    type Batch = f64;

    fn num_params(&self) -> usize {
        1
    }

    fn loss_and_grad(&self, params: &[f64], target: &f64) -> Result<(f64, Vec<f64>)> {
        check(params, 1)?;
        let r = params[0] - target;
        Ok((r * r, vec![2.0 * r]))
    }

    fn hessian_vec(&self, params: &[f64], _: &f64, v: &[f64]) -> Result<Vec<f64>> {
        check(params, 1)?;
        Ok(vec![2.0 * v[0]])
    }
}

/// `(t0 t1 - a0)^2 + a1 t0^4` on two parameters; the batch is `[a0, a1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Coupled2d;

impl Objective for Coupled2d {
    type Batch = [f64; 2];

    fn num_params(&self) -> usize {
        2
    }

    fn loss_and_grad(&self, t: &[f64], a: &[f64; 2]) -> Result<(f64, Vec<f64>)> {
        check(t, 2)?;
        let r = t[0] * t[1] - a[0];
        let loss = r * r + a[1] * t[0].powi(4);
        let grad = vec![2.0 * r * t[1] + 4.0 * a[1] * t[0].powi(3), 2.0 * r * t[0]];
        Ok((loss, grad))
    }

    fn hessian_vec(&self, t: &[f64], a: &[f64; 2], v: &[f64]) -> Result<Vec<f64>> {
        check(t, 2)?;
        let r = t[0] * t[1] - a[0];
        let h00 = 2.0 * t[1] * t[1] + 12.0 * a[1] * t[0] * t[0];
        let h01 = 2.0 * t[0] * t[1] + 2.0 * r;
        let h11 = 2.0 * t[0] * t[0];
        Ok(vec![h00 * v[0] + h01 * v[1], h01 * v[0] + h11 * v[1]])
    }
}

fn check(params: &[f64], n: usize) -> Result<()> {
    if params.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: params.len(),
        });
    }
    Ok(())
}
