//! Adam with the classic bias-corrected update and L1/L2 gradient augmentation.

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Per-parameter optimizer state. Accumulators share the owning parameter's
/// shape (kept flat; the parameter provides the geometry).
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One Adam step on `param`.
///
/// The raw gradient is augmented with `l1 * sign(param) + l2 * param` before
/// the moment updates (sign(0) taken as 0). Update is the classic form:
/// m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t),
/// param -= lr * m_hat / (sqrt(v_hat) + eps).
pub fn adam_step(
    param: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamState,
    lr: f64,
    l1: f64,
    l2: f64,
) -> Result<()> {
    if param.rows() != grad.rows() || param.cols() != grad.cols() {
        return Err(Error::usage(format!(
            "adam_step: param is {}x{} but grad is {}x{}",
            param.rows(),
            param.cols(),
            grad.rows(),
            grad.cols()
        )));
    }
    if state.len() != param.len() {
        return Err(Error::usage(format!(
            "adam_step: state length {} does not match parameter length {}",
            state.len(),
            param.len()
        )));
    }
    if !(lr >= 0.0) || !(l1 >= 0.0) || !(l2 >= 0.0) {
        return Err(Error::usage("adam_step: lr, l1, l2 must be >= 0"));
    }

    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);

    let p = param.as_mut_slice();
    let g = grad.as_slice();
    for i in 0..p.len() {
        let reg = l1 * sign(p[i]) + l2 * p[i];
        let gi = g[i] + reg;
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * gi;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * gi * gi;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        if !p[i].is_finite() {
            return Err(Error::numeric(format!(
                "adam_step produced non-finite value at flat index {i}"
            )));
        }
    }
    Ok(())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
