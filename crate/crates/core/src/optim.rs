//! Adam / AdamW and the warmup + cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One AdamW update with bias correction and decoupled weight decay:
///
/// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`
///
/// where the decay term uses the parameter value from before the step.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} state entries",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient at entry {i} (optimizer step {})",
            state.t + 1
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + weight_decay * *p);
    }
    Ok(())
}

/// Linear warmup from 0 to `peak`, then cosine decay to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmupCosine {
    pub peak: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl WarmupCosine {
    pub fn lr_at(&self, step: u64) -> f64 {
        if step >= self.total_steps {
            return 0.0;
        }
        if step < self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let decay_len = (self.total_steps - self.warmup_steps) as f64;
        let progress = (step - self.warmup_steps) as f64 / decay_len;
        0.5 * self.peak * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_no_decay_leave_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adamw_step(&mut p, &[0.0, 0.0], &mut s, 0.1, &AdamConfig::default(), 0.0).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        // From zero state: m_hat = g, v_hat = g^2, so the step is
        // -lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        let grads = [0.5, -3.0, 1e-3];
        let mut p = vec![0.2, 0.4, -0.1];
        let orig = p.clone();
        let mut s = AdamState::new(3);
        adamw_step(&mut p, &grads, &mut s, 0.01, &cfg, 0.0).unwrap();
        for i in 0..3 {
            let expect = orig[i] - 0.01 * grads[i] / (grads[i].abs() + cfg.eps);
            assert!((p[i] - expect).abs() < 1e-15, "{} vs {}", p[i], expect);
        }
    }

    #[test]
    fn decay_alone_is_multiplicative_shrink() {
        let mut p = vec![2.0, -4.0];
        let mut s = AdamState::new(2);
        adamw_step(&mut p, &[0.0, 0.0], &mut s, 0.1, &AdamConfig::default(), 0.5).unwrap();
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
        assert!((p[1] + 4.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let err = adamw_step(&mut p, &[f64::NAN], &mut s, 0.1, &AdamConfig::default(), 0.0)
            .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn schedule_landmarks() {
        let s = WarmupCosine {
            peak: 1e-3,
            warmup_steps: 50,
            total_steps: 250,
        };
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(25) - 5e-4).abs() < 1e-18);
        assert!((s.lr_at(50) - 1e-3).abs() < 1e-18);
        assert!((s.lr_at(150) - 5e-4).abs() < 1e-15);
        assert!(s.lr_at(250).abs() < 1e-18);
        assert_eq!(s.lr_at(1000), 0.0);
        for step in 50..249 {
            assert!(s.lr_at(step + 1) <= s.lr_at(step));
        }
    }
}
