use super::Real;
use crate::error::{Error, Result};

/// Learning rate decays by `decay_rate` every `decay_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_rate: f64,
    pub decay_steps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr * self.decay_rate.powf(step as f64 / self.decay_steps)
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_rate: 0.1,
            decay_steps: 250_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments shaped like `shapes` (one entry per parameter tensor).
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.step)
    }

    /// One bias-corrected update of every tensor in `params`.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::ShapeMismatch {
                    expected: m.len(),
                    got: p.len(),
                });
            }
        }
        let lr = self.config.lr_at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let step_size = T::from_f64(lr / bc1);
        let inv_sqrt_bc2 = T::from_f64(1.0 / bc2.sqrt());
        let eps = T::from_f64(self.config.eps);
        let (b1, b2) = (T::from_f64(b1), T::from_f64(b2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                p[i] = p[i] - step_size * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0f64, -2.0];
        let mut st = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        st.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.01] {
            let mut p = vec![0.5f64];
            let cfg = AdamConfig::with_lr(1e-2);
            let mut st = AdamState::<f64>::new(cfg, &[1]);
            st.step(&mut [&mut p], &[&[g]]).unwrap();
            let moved = p[0] - 0.5;
            assert!((moved + 1e-2 * f64::signum(g)).abs() < 1e-8, "{moved}");
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let target = 1.7;
        let mut x = vec![-3.0f64];
        let mut st = AdamState::<f64>::new(AdamConfig::with_lr(0.05), &[1]);
        for _ in 0..2000 {
            let g = 2.0 * (x[0] - target);
            st.step(&mut [&mut x], &[&[g]]).unwrap();
        }
        assert!((x[0] - target).abs() < 1e-3, "{}", x[0]);
    }

    #[test]
    fn decay_schedule() {
        let c = AdamConfig::with_lr(5e-4);
        assert!((c.lr_at(250_000) - 5e-5).abs() < 1e-15);
        assert!((c.lr_at(0) - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0f32; 3];
        let mut st = AdamState::<f32>::new(AdamConfig::default(), &[2]);
        assert!(st.step(&mut [&mut p], &[&[0.0; 3]]).is_err());
    }
}
