//! Dense vector/matrix arithmetic, nonlinearities, Adam, seeded randomness,
//! and a central-difference gradient checker. Everything is f64; gradient
//! checks at 1e-4 relative tolerance are not reliable in f32.

pub mod adam;
pub mod matrix;
pub mod rng;

pub use adam::{adam_step, AdamState};
pub use matrix::Matrix;
pub use rng::Rng;

use crate::error::{Error, Result};

/// Numerically stable softmax (max-subtraction before exponentiation).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::usage("softmax of empty input"));
    }
    if let Some(i) = scores.iter().position(|x| !x.is_finite()) {
        return Err(Error::numeric(format!(
            "softmax input has non-finite value at index {i}"
        )));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    Ok(out)
}

/// Elementwise logistic 1 / (1 + exp(-x)).
pub fn sigmoid(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::numeric(format!(
            "sigmoid input has non-finite value at index {i}"
        )));
    }
    Ok(v.iter().map(|&x| sigmoid_scalar(x)).collect())
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Central-difference gradient of `f` at `x`: (f(x + h e_i) - f(x - h e_i)) / 2h.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::usage("finite_diff_grad requires h > 0"));
    }
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric(format!(
                "finite_diff_grad: non-finite objective near coordinate {i}"
            )));
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Relative error used by every gradient comparison in this crate:
/// |a - b| / max(1e-8, |a| + |b|).
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1e-8, a.abs() + b.abs())
}
