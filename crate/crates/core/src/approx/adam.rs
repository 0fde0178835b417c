use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One Adam update that *descends* along `grads`.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Validation(format!(
            "adam shapes disagree: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Validation(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Divergence(format!("non-finite gradient at parameter {i}")));
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState { m: vec![0.5, -0.5], v: vec![0.25, 0.25], step: 3 };
        // nonzero moments still move params; start from fresh state for the no-op
        let mut fresh = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut fresh, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        let before = st.clone();
        adam_step(&mut p, &[0.0, 0.0], &mut st, &AdamConfig::default()).unwrap();
        assert!(st.m[0].abs() < before.m[0].abs() && st.v[0] < before.v[0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut st = AdamState::new(3);
        let cfg = AdamConfig::with_lr(0.01);
        adam_step(&mut p, &[3.0, -0.2, 1e-3], &mut st, &cfg).unwrap();
        for (pv, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((pv - s * 0.01).abs() < 1e-6, "{pv}");
        }
    }

    #[test]
    fn three_scripted_steps_follow_recurrence() {
        let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let grads = [1.0, -2.0, 0.5];
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for (k, g) in grads.iter().enumerate() {
            adam_step(&mut p, &[*g], &mut st, &cfg).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let t = (k + 1) as i32;
            x -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((p[0] - x).abs() < 1e-12);
        assert_eq!(st.step, 3);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        assert!(matches!(
            adam_step(&mut p, &[f64::NAN], &mut st, &AdamConfig::default()),
            Err(Error::Divergence(_))
        ));
        assert_eq!(st.step, 0);
        assert!(adam_step(&mut p, &[0.0, 1.0], &mut st, &AdamConfig::default()).is_err());
        assert!(adam_step(&mut p, &[0.0], &mut st, &AdamConfig::with_lr(0.0)).is_err());
    }
}
