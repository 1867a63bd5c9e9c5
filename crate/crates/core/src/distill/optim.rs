//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// A parameter tensor with its gradient.
pub struct ParamGroup<'a, T> {
    pub values: &'a mut [T],
    pub grads: &'a [T],
    /// Whether weight decay applies to this tensor.
    pub decay: bool,
}

/// First and second moment estimates per parameter group, plus the step count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

/// One AdamW update:
/// `θ ← θ − lr · (m̂ / (√v̂ + eps) + wd · θ)` with bias-corrected moments.
///
/// Groups must be passed in the same order on every call. On a non-finite
/// gradient nothing is modified.
pub fn adamw_step<T: Scalar>(
    groups: &mut [ParamGroup<'_, T>],
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
    lr: T,
    wd: T,
) -> Result<()> {
    let next = state.step + 1;
    for (gi, g) in groups.iter().enumerate() {
        if g.values.len() != g.grads.len() {
            return Err(Error::Shape(format!(
                "parameter group {gi}: {} values, {} gradients",
                g.values.len(),
                g.grads.len()
            )));
        }
        if let Some(p) = g.grads.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at step {next}, group {gi}, index {p}"
            )));
        }
    }
    if state.m.len() != groups.len() {
        state.m = groups.iter().map(|g| vec![T::zero(); g.values.len()]).collect();
        state.v = state.m.clone();
    }
    state.step = next;

    let b1 = T::of(hyper.beta1);
    let b2 = T::of(hyper.beta2);
    let eps = T::of(hyper.eps);
    let c1 = T::one() - b1.powi(next as i32);
    let c2 = T::one() - b2.powi(next as i32);
    for (gi, g) in groups.iter_mut().enumerate() {
        let decay = if g.decay { wd } else { T::zero() };
        let m = &mut state.m[gi];
        let v = &mut state.v[gi];
        for k in 0..g.values.len() {
            let grad = g.grads[k];
            m[k] = b1 * m[k] + (T::one() - b1) * grad;
            v[k] = b2 * v[k] + (T::one() - b2) * grad * grad;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            let theta = g.values[k];
            g.values[k] = theta - lr * (m_hat / (v_hat.sqrt() + eps) + decay * theta);
        }
    }
    Ok(())
}
