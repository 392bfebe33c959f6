use serde::{Deserialize, Serialize};

use super::tensor::ModelParams;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
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

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: ModelParams<f64>,
    v: ModelParams<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` along `grads`.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &ModelParams<f64>,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    params.check_same_layout(grads)?;
    params.check_same_layout(&state.m)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
        let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let update = cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            p[i] = (f64::from(p[i]) - update) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::tensor::Tensor;

    fn params(values: &[f32]) -> ModelParams<f32> {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::new(vec![values.len()], values.to_vec()).unwrap()).unwrap();
        p
    }

    fn grads(values: &[f64]) -> ModelParams<f64> {
        let mut g = ModelParams::new();
        g.insert("w", Tensor::new(vec![values.len()], values.to_vec()).unwrap()).unwrap();
        g
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = params(&[0.5, -1.0, 2.0]);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &grads(&[0.0; 3]), &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // m_hat = g, v_hat = g^2, so the first update is lr * g / (|g| + eps).
        let mut p = params(&[0.0, 0.0, 0.0, 0.0]);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &grads(&[3.0, -0.2, 1e-3, -50.0]), &mut s, &cfg).unwrap();
        let got = p.get("w").unwrap().data();
        for (v, g) in got.iter().zip([3.0f64, -0.2, 1e-3, -50.0]) {
            assert_eq!(v.signum() as f64, -g.signum());
            assert!((f64::from(v.abs()) - cfg.lr).abs() < 1e-6 * cfg.lr + 1e-5 * cfg.lr);
        }
    }

    #[test]
    fn identical_calls_identical_results() {
        let cfg = AdamConfig::default();
        let run = || {
            let mut p = params(&[0.1, 0.2]);
            let mut s = AdamState::new(&p);
            for _ in 0..3 {
                adam_step(&mut p, &grads(&[0.5, -0.25]), &mut s, &cfg).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_layout_rejected() {
        let mut p = params(&[0.0, 0.0]);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &grads(&[0.0; 3]), &mut s, &AdamConfig::default()).is_err());
    }
}
