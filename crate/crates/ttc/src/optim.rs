//! Adam with a cosine learning-rate schedule.

use crate::error::{Result, TtcError};
use crate::net::ModelParams;

/// Cosine decay from `lr_max` to `lr_min` over `total` steps; clamps to
/// `lr_min` for any step past the horizon.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    assert!(total > 0, "schedule needs at least one step");
    assert!(lr_max >= lr_min, "lr_max below lr_min");
    if step >= total {
        return lr_min;
    }
    let t = step as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second-moment state, one pair of buffers per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

impl Adam {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        let shapes: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { config, m: shapes.clone(), v: shapes, t: 0 }
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }

    /// One update in place. `frozen_below` masks out the first tensors in
    /// canonical order (used to freeze the encoder during finetuning); their
    /// moments are not advanced either, so a frozen tensor is bit-identical
    /// before and after.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelParams,
        lr: f64,
        frozen_below: usize,
    ) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.config.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.config.beta2.powi(self.t as i32);
        let g_tensors = grads.tensors();
        for (ti, tensor) in params.tensors_mut().into_iter().enumerate() {
            if ti < frozen_below {
                continue;
            }
            let g = g_tensors[ti];
            if g.len() != tensor.len() {
                return Err(TtcError::InvalidArgument(format!(
                    "gradient tensor {ti} has length {} but parameter has {}",
                    g.len(),
                    tensor.len()
                )));
            }
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for k in 0..tensor.len() {
                m[k] = self.config.beta1 * m[k] + (1.0 - self.config.beta1) * g[k];
                v[k] = self.config.beta2 * v[k] + (1.0 - self.config.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                tensor[k] -= lr * m_hat / (v_hat.sqrt() + self.config.eps);
                if !tensor[k].is_finite() {
                    return Err(TtcError::NumericOverflow(format!(
                        "parameter tensor {ti} after optimizer step {}",
                        self.t
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    #[test]
    fn cosine_endpoints_and_midpoint() {
        assert!((cosine_lr(0, 100, 1e-3, 1e-5) - 1e-3).abs() < 1e-18);
        let mid = cosine_lr(50, 100, 1e-3, 1e-5);
        assert!((mid - (1e-5 + 0.5 * (1e-3 - 1e-5))).abs() < 1e-12);
        assert_eq!(cosine_lr(100, 100, 1e-3, 1e-5), 1e-5);
        assert_eq!(cosine_lr(250, 100, 1e-3, 1e-5), 1e-5);
        // monotone decreasing across the horizon
        let mut prev = f64::INFINITY;
        for s in 0..=100 {
            let lr = cosine_lr(s, 100, 1e-3, 1e-5);
            assert!(lr <= prev + 1e-18);
            prev = lr;
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let params = ModelParams::init(NetConfig::with_dim(4), 0).unwrap();
        let mut moved = params.clone();
        let mut grads = params.zeros_like();
        for t in grads.tensors_mut() {
            for g in t.iter_mut() {
                *g = 0.37;
            }
        }
        let mut opt = Adam::new(&params, AdamConfig::default());
        let lr = 1e-3;
        opt.step(&mut moved, &grads, lr, 0).unwrap();
        // bias-corrected first step is lr * g / (|g| + eps') ~= lr * sign(g)
        for (before, after) in params.tensors().iter().zip(moved.tensors().iter()) {
            for (b, a) in before.iter().zip(after.iter()) {
                let delta = a - b;
                assert!((delta + lr).abs() < 1e-5, "delta {delta}");
            }
        }
    }

    #[test]
    fn frozen_tensors_stay_bit_identical() {
        let params = ModelParams::init(NetConfig::with_dim(4), 1).unwrap();
        let mut moved = params.clone();
        let mut grads = params.zeros_like();
        for t in grads.tensors_mut() {
            for g in t.iter_mut() {
                *g = 1.0;
            }
        }
        let mut opt = Adam::new(&params, AdamConfig::default());
        let split = params.first_mlp_tensor();
        for _ in 0..5 {
            opt.step(&mut moved, &grads, 1e-2, split).unwrap();
        }
        for (ti, (before, after)) in params.tensors().iter().zip(moved.tensors().iter()).enumerate()
        {
            if ti < split {
                assert_eq!(before, after, "frozen tensor {ti} moved");
            } else {
                assert_ne!(before, after, "trainable tensor {ti} did not move");
            }
        }
    }

    #[test]
    fn adapts_step_size_per_coordinate() {
        // Large and small constant gradients end up with nearly equal step
        // magnitudes once the second moment saturates.
        let params = ModelParams::init(NetConfig::with_dim(4), 2).unwrap();
        let mut a = params.clone();
        let mut b = params.clone();
        let mut g_small = params.zeros_like();
        let mut g_big = params.zeros_like();
        for t in g_small.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 1e-3);
        }
        for t in g_big.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 1e3);
        }
        let mut oa = Adam::new(&params, AdamConfig::default());
        let mut ob = Adam::new(&params, AdamConfig::default());
        for _ in 0..200 {
            oa.step(&mut a, &g_small, 1e-3, 0).unwrap();
            ob.step(&mut b, &g_big, 1e-3, 0).unwrap();
        }
        let drift_a = a.tensors()[0][0] - params.tensors()[0][0];
        let drift_b = b.tensors()[0][0] - params.tensors()[0][0];
        assert!((drift_a - drift_b).abs() / drift_b.abs() < 0.02);
    }
}
