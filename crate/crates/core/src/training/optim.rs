//! Adam, the warm-up schedule and early stopping.

use crate::error::{FancError, Result};
use crate::model::{ModelParameters, PARAM_NAMES};
use crate::numerics::{Gradients, RealArray, Scalar};

/// Linear ramp from `lr / 10` at epoch 0 to `lr` at `warmup_epochs`, flat after.
pub fn warmup_lr<T: Scalar>(epoch: usize, lr: T, warmup_epochs: usize) -> T {
    if epoch >= warmup_epochs {
        return lr;
    }
    let frac = T::from_usize_lossy(epoch) / T::from_usize_lossy(warmup_epochs);
    lr * (T::lit(0.1) + T::lit(0.9) * frac)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

/// First and second moments per parameter array, in storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<RealArray<T>>,
    pub v: Vec<RealArray<T>>,
    /// Updates taken so far.
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParameters<T>) -> Self {
        let zeros: Vec<RealArray<T>> = params.groups().iter().map(|a| RealArray::zeros(a.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of a flat array; `step` counts from 1.
pub fn adam_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: T,
    cfg: &AdamConfig<T>,
) {
    let t = step as i32;
    let c1 = T::one() - cfg.beta1.powi(t);
    let c2 = T::one() - cfg.beta2.powi(t);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (T::one() - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (T::one() - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Applies one Adam step to every parameter array. A non-finite gradient
/// aborts before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParameters<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: T,
    cfg: &AdamConfig<T>,
) -> Result<()> {
    let mut ordered = Vec::with_capacity(PARAM_NAMES.len());
    for (name, p) in PARAM_NAMES.iter().zip(params.groups()) {
        let g = grads
            .get(name)
            .ok_or_else(|| FancError::contract("adam_step", format!("no gradient for `{name}`")))?;
        if g.shape() != p.shape() {
            return Err(FancError::contract("adam_step", format!("gradient shape mismatch for `{name}`")));
        }
        if !g.all_finite() {
            return Err(FancError::NonFinite(format!("gradient of `{name}`")));
        }
        ordered.push(g);
    }
    state.step += 1;
    let step = state.step;
    for (((p, g), m), v) in params
        .groups_mut()
        .into_iter()
        .zip(ordered)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        adam_update(p.as_mut_slice(), g.as_slice(), m.as_mut_slice(), v.as_mut_slice(), step, lr, cfg);
    }
    if !params.all_finite() {
        return Err(FancError::NonFinite("parameters after the optimiser step".into()));
    }
    Ok(())
}

/// Stops once the monitored loss has not strictly improved for `patience`
/// consecutive epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping<T> {
    pub patience: usize,
    best: Option<T>,
    best_epoch: usize,
    since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl<T: Scalar> EarlyStopping<T> {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: T) -> Observation {
        let improved = self.best.is_none_or(|b| loss < b);
        if improved {
            self.best = Some(loss);
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Observation {
            improved,
            stop: self.since_best >= self.patience,
        }
    }

    pub fn best(&self) -> Option<(usize, T)> {
        self.best.map(|b| (self.best_epoch, b))
    }
}
