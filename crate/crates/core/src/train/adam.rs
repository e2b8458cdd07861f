use crate::error::{Error, Result};
use crate::scene::{normalize_quat, quat_norm, ParamField, ParamVector, PARAMS_PER_GAUSSIAN};

/// Step sizes per parameter class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub center: f64,
    pub rotation: f64,
    pub log_scale: f64,
    pub color: f64,
    pub opacity: f64,
}

impl LearningRates {
    /// Defaults with the center rate scaled by the scene extent.
    pub fn for_extent(extent: f64) -> Self {
        Self {
            center: 1.6e-4 * extent,
            rotation: 1e-3,
            log_scale: 5e-3,
            color: 2.5e-3,
            opacity: 5e-2,
        }
    }

    pub fn get(&self, field: ParamField) -> f64 {
        match field {
            ParamField::Center => self.center,
            ParamField::Rotation => self.rotation,
            ParamField::LogScale => self.log_scale,
            ParamField::Color => self.color,
            ParamField::Opacity => self.opacity,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            center: self.center * k,
            rotation: self.rotation * k,
            log_scale: self.log_scale * k,
            color: self.color * k,
            opacity: self.opacity * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in ParamField::ALL {
            let r = self.get(f);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("{} learning rate must be positive, got {r}", f.name())));
            }
        }
        Ok(())
    }
}

impl Default for LearningRates {
    fn default() -> Self {
        Self::for_extent(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments aligned with a [`ParamVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update; quaternions are renormalized afterwards.
///
/// Nothing is modified when a gradient entry is non-finite.
pub fn adam_step(
    params: &mut ParamVector,
    grads: &ParamVector,
    state: &mut AdamState,
    cfg: &AdamConfig,
    rates: &LearningRates,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Topology {
            expected: params.len(),
            actual: grads.len().min(state.m.len()),
        });
    }
    if let Some(i) = grads.as_slice().iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            gaussian: i / PARAMS_PER_GAUSSIAN,
            param: ParamField::of_slot(i % PARAMS_PER_GAUSSIAN).name(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut lr = [0.0; PARAMS_PER_GAUSSIAN];
    for (slot, r) in lr.iter_mut().enumerate() {
        *r = rates.get(ParamField::of_slot(slot));
    }
    let p = params.as_mut_slice();
    for (i, &g) in grads.as_slice().iter().enumerate() {
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        p[i] -= lr[i % PARAMS_PER_GAUSSIAN] * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    for g in 0..params.gaussians() {
        let q = params.field_mut(g, ParamField::Rotation);
        let cur = [q[0], q[1], q[2], q[3]];
        if (quat_norm(cur) - 1.0).abs() > 4.0 * f64::EPSILON {
            q.copy_from_slice(&normalize_quat(cur));
        }
    }
    Ok(())
}
