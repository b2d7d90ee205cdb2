//! Draw series from composite-kernel Gaussian processes.

use super::kernel::CompositeKernel;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, lower_triangular_matvec};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Mean function of the GP draw, evaluated on the normalized grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeanFn {
    Zero,
    Linear { intercept: f64, slope: f64 },
}

impl MeanFn {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            MeanFn::Zero => 0.0,
            MeanFn::Linear { intercept, slope } => intercept + slope * t,
        }
    }
}

/// Gram matrix of `k` on the normalized index grid `t_i = i / n`.
pub fn gram_matrix(k: &CompositeKernel, n: usize) -> Array2<f64> {
    let mut g = Array2::zeros((n, n));
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let ti = i as f64 * scale;
        for j in 0..=i {
            let v = k.eval(ti, j as f64 * scale);
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

/// Draw `mean + L z` where `L` is the Cholesky factor of
/// `Gram + jitter * I` and `z` is standard normal.
///
/// On Cholesky failure the jitter escalates by 10x, at most three retries,
/// after which a generation error is returned. The normal draw is taken
/// before factorization so the output is a pure function of the RNG state
/// regardless of how many retries were needed.
pub fn sample_gp<R: Rng>(
    k: &CompositeKernel,
    mean: MeanFn,
    jitter: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::input("gp draw needs n >= 2"));
    }
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let gram = gram_matrix(k, n);

    let mut level = jitter;
    for _attempt in 0..4 {
        let mut a = gram.clone();
        for i in 0..n {
            a[[i, i]] += level;
        }
        if cholesky_in_place(&mut a).is_ok() {
            let noise = lower_triangular_matvec(&a, &z);
            let scale = 1.0 / n as f64;
            let values: Vec<f64> = noise
                .iter()
                .enumerate()
                .map(|(i, v)| mean.eval(i as f64 * scale) + v)
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::generation("gp draw produced non-finite values"));
            }
            return Ok(values);
        }
        level *= 10.0;
    }
    Err(Error::generation(format!(
        "cholesky failed after jitter escalation to {level:.3e}"
    )))
}
