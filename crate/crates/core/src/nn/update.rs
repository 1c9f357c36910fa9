//! Decay-regularized Nesterov-style update using only additions and
//! plaintext-constant multiplies.

use serde::{Deserialize, Serialize};

use crate::api::{Backend, CipherVector, Evaluator};
use crate::error::{HeError, Result};

/// Constants of one update. `step` already includes any `1/b` batch
/// normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule {
    pub step: f64,
    pub decay: f64,
    pub momentum: f64,
}

impl UpdateRule {
    pub fn step_momentum(&self) -> f64 {
        self.step * self.momentum
    }

    pub fn step_momentum_sq(&self) -> f64 {
        self.step * self.momentum * self.momentum
    }

    /// Scalar reference of [`update_weights`] with the same operation order.
    pub fn apply_scalar(&self, w: f64, v: Option<f64>, dw: f64, t: u64) -> (f64, f64) {
        let d = dw + dw * self.decay;
        let base = d * self.step + d * self.step_momentum();
        match v.filter(|_| t > 1) {
            None => (w - base, d),
            Some(v) => (w - (base + v * self.step_momentum_sq()), v * self.momentum + d),
        }
    }
}

/// One update of `(W, V)` from gradient `dW` at iteration `t ≥ 1`.
///
/// `t = 1` ignores `v` and seeds the velocity with the decayed gradient.
/// Consumes exactly two levels beyond the deeper of `dW` and `V`.
pub fn update_weights<B: Backend>(
    ev: &Evaluator<B>,
    w: &CipherVector<B>,
    v: Option<&CipherVector<B>>,
    dw: &CipherVector<B>,
    rule: UpdateRule,
    t: u64,
) -> Result<(CipherVector<B>, CipherVector<B>)> {
    if t == 0 {
        return Err(HeError::InvalidParams("iterations count from 1".into()));
    }
    let d = ev.add(dw, &ev.mul_scalar(dw, rule.decay)?)?;
    let base = ev.add(
        &ev.mul_scalar(&d, rule.step)?,
        &ev.mul_scalar(&d, rule.step_momentum())?,
    )?;
    let (delta, velocity) = match v.filter(|_| t > 1) {
        None => (base, d),
        Some(v) => {
            let delta = ev.add(&base, &ev.mul_scalar(v, rule.step_momentum_sq())?)?;
            let velocity = ev.add(&ev.mul_scalar(v, rule.momentum)?, &d)?;
            (delta, velocity)
        }
    };
    Ok((ev.sub(w, &delta)?, velocity))
}
