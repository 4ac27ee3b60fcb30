//! StableAdamW: Adam with decoupled weight decay and per-tensor RMS clipping
//! of the bias-corrected update.

use serde::{Deserialize, Serialize};

use crate::encoder::{is_norm_name, EncoderConfig, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Update-RMS threshold κ; `None` disables clipping.
    pub clip_threshold: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            weight_decay: 1e-5,
            clip_threshold: Some(1.0),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("eps must be positive and weight_decay non-negative".into()));
        }
        if self.clip_threshold.is_some_and(|k| !(k > 0.0)) {
            return Err(Error::InvalidConfig("clip_threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
    pub hyper: AdamConfig,
}

impl<T: Real> OptState<T> {
    pub fn new(config: &EncoderConfig, hyper: AdamConfig) -> Self {
        OptState {
            m: ParamSet::zeros(config),
            v: ParamSet::zeros(config),
            step: 0,
            hyper,
        }
    }
}

/// One StableAdamW update of a single tensor at step `t` (1-based).
///
/// Weight decay is applied before the Adam update when `decay` is set.
#[allow(clippy::too_many_arguments)]
pub fn adamw_tensor_update<T: Real>(
    p: &mut [T],
    g: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    hyper: &AdamConfig,
    lr: f64,
    decay: bool,
) {
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let c1 = T::lit(1.0 - b1.powi(t as i32));
    let c2 = T::lit(1.0 - b2.powi(t as i32));
    let (b1, b2, eps) = (T::lit(b1), T::lit(b2), T::lit(hyper.eps));
    let one = T::one();
    let mut u = Vec::with_capacity(p.len());
    let mut sq = T::zero();
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        let ui = mh / (vh.sqrt() + eps);
        sq += ui * ui;
        u.push(ui);
    }
    let mut step = T::lit(lr);
    if let Some(kappa) = hyper.clip_threshold {
        let rms = (sq / T::from_usize(p.len().max(1)).unwrap()).sqrt();
        let ratio = rms / T::lit(kappa);
        if ratio > one {
            step /= ratio;
        }
    }
    let shrink = T::lit(1.0 - lr * hyper.weight_decay);
    for (pi, ui) in p.iter_mut().zip(u) {
        if decay {
            *pi *= shrink;
        }
        *pi -= step * ui;
    }
}

/// Apply one optimizer step to every tensor. Norm scales are not decayed.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn stable_adamw_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut OptState<T>,
    lr: f64,
) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr} must be finite and >= 0")));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let names = params.names();
    let shapes_match = |a: &ParamSet<T>| {
        a.tensors().iter().zip(params.tensors()).all(|(x, y)| x.shape == y.shape)
            && a.tensors().len() == params.tensors().len()
    };
    if !shapes_match(grads) || !shapes_match(&state.m) || !shapes_match(&state.v) {
        return Err(Error::Shape("optimizer state or gradient shapes differ from params".into()));
    }
    state.step += 1;
    let t = state.step;
    let hyper = state.hyper.clone();
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((p, g), m), v), name) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs).zip(&names) {
        adamw_tensor_update(
            &mut p.data,
            &g.data,
            &mut m.data,
            &mut v.data,
            t,
            &hyper,
            lr,
            !is_norm_name(name),
        );
    }
    Ok(())
}
