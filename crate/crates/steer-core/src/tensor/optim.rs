//! AdamW with decoupled weight decay, plus the warmup/cosine/floor schedule.

use super::Tensor;
use crate::error::{Error, Result};

/// Defaults: decay applies only to matrix weights, never to gate scalars or
/// biases (decaying a gate would fight the gating mechanism).
#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.05 }
    }
}

/// A view of one trainable tensor plus its decay eligibility.
pub struct ParamRef<'a> {
    pub tensor: &'a mut Tensor,
    pub decay: bool,
}

#[derive(Debug, Clone)]
pub struct AdamWState {
    pub cfg: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamWState {
    pub fn new(cfg: AdamWConfig, sizes: &[usize]) -> Self {
        AdamWState {
            cfg,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One AdamW update. `grads[i]` must match `params[i]` in length; the
    /// parameter order must stay fixed across the run.
    pub fn step(&mut self, params: &mut [ParamRef<'_>], grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "optimizer state holds {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if g.len() != p.tensor.numel() || m.len() != g.len() {
                return Err(Error::contract(format!(
                    "param/grad/state length mismatch: {} / {} / {}",
                    p.tensor.numel(),
                    g.len(),
                    m.len()
                )));
            }
            let wd = if p.decay { c.weight_decay } else { 0.0 };
            for i in 0..g.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                let x = &mut p.tensor.data[i];
                *x -= lr * wd * *x;
                *x -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `peak`, cosine decay to `floor` by `decay_end`,
/// constant `floor` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub peak: f64,
    pub floor: f64,
    pub decay_end: u64,
}

impl LrSchedule {
    pub fn new(warmup_steps: u64, peak: f64, floor: f64, decay_end: u64) -> Result<Self> {
        if warmup_steps >= decay_end {
            return Err(Error::contract(format!(
                "warmup ({warmup_steps}) must precede decay end ({decay_end})"
            )));
        }
        Ok(LrSchedule { warmup_steps, peak, floor, decay_end })
    }

    pub fn at(&self, step: u64) -> f64 {
        if step <= self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        if step >= self.decay_end {
            return self.floor;
        }
        let progress =
            (step - self.warmup_steps) as f64 / (self.decay_end - self.warmup_steps) as f64;
        self.floor + (self.peak - self.floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Accumulate per-sample leaf gradients into a running sum, in call order.
pub fn accumulate_grads(dst: &mut [Vec<f64>], src: &[Option<&[f64]>]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        if let Some(s) = s {
            for (dv, sv) in d.iter_mut().zip(*s) {
                *dv += sv;
            }
        }
    }
}

pub fn scale_grads(grads: &mut [Vec<f64>], factor: f64) {
    for g in grads {
        g.iter_mut().for_each(|v| *v *= factor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> Tensor {
        Tensor::param(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut p = one_param(1.5);
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut st = AdamWState::new(cfg, &[1]);
        st.step(&mut [ParamRef { tensor: &mut p, decay: true }], &[vec![0.0]], 0.1)
            .unwrap();
        assert_eq!(p.data[0], 1.5);
    }

    #[test]
    fn first_step_matches_hand_computed_adamw() {
        // From m = v = 0, one step with gradient g:
        //   m̂ = g, v̂ = g², so Δ = -lr · g / (|g| + eps) ≈ -lr · sign(g).
        let g = -0.37;
        let lr = 1e-2;
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut p = one_param(0.0);
        let mut st = AdamWState::new(cfg, &[1]);
        st.step(&mut [ParamRef { tensor: &mut p, decay: false }], &[vec![g]], lr)
            .unwrap();
        let expect = -lr * g / (g.abs() + cfg.eps);
        assert!((p.data[0] - expect).abs() < 1e-15);
        assert!((p.data[0] - lr).abs() < 1e-8); // direction = -sign(g)·lr
    }

    #[test]
    fn decoupled_decay_shrinks_before_update() {
        let cfg = AdamWConfig { weight_decay: 0.1, ..Default::default() };
        let mut p = one_param(2.0);
        let mut st = AdamWState::new(cfg, &[1]);
        st.step(&mut [ParamRef { tensor: &mut p, decay: true }], &[vec![0.0]], 0.5)
            .unwrap();
        // zero grad: only the decay term acts: 2.0 - 0.5*0.1*2.0 = 1.9
        assert!((p.data[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn state_shape_mismatch_is_an_error() {
        let mut p = one_param(0.0);
        let mut st = AdamWState::new(AdamWConfig::default(), &[2]);
        let err = st
            .step(&mut [ParamRef { tensor: &mut p, decay: false }], &[vec![0.0, 0.0]], 0.1)
            .unwrap_err();
        assert!(err.to_string().contains("mismatch"));
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = LrSchedule::new(100, 3e-4, 3e-5, 800).unwrap();
        assert_eq!(s.at(0), 0.0);
        assert_eq!(s.at(100), 3e-4);
        assert_eq!(s.at(800), 3e-5);
        assert_eq!(s.at(5000), 3e-5);
        // halfway through the cosine: (peak + floor) / 2
        let mid = s.at((100 + 800) / 2);
        assert!((mid - (3e-4 + 3e-5) / 2.0).abs() < 1e-18);
    }

    #[test]
    fn schedule_rejects_inverted_phases() {
        assert!(LrSchedule::new(800, 3e-4, 3e-5, 100).is_err());
    }
}
