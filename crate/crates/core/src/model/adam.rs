//! Adam optimizer over the flat parameter vector.

use crate::error::{Error, Result};
use crate::num::{rl, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::Config(format!(
                "invalid optimizer settings: lr {}, betas {}/{}, epsilon {}",
                self.learning_rate, self.beta1, self.beta2, self.epsilon
            )));
        }
        Ok(())
    }
}

/// Optimizer state: first and second moment estimates plus the step count
/// used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, m: vec![T::zero(); n_params], v: vec![T::zero(); n_params], step: 0 })
    }

    /// One bias-corrected update. A non-finite gradient aborts with its
    /// location — gradients are never clamped or skipped silently — and
    /// parameters are checked to stay finite afterwards.
    pub fn step(&mut self, theta: &mut [T], grads: &[T]) -> Result<()> {
        if theta.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch { a: theta.len(), b: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient".into(),
                detail: format!("component {i} is {} at optimizer step {}", grads[i], self.step + 1),
            });
        }
        self.step += 1;
        let b1 = rl::<T>(self.cfg.beta1);
        let b2 = rl::<T>(self.cfg.beta2);
        let one = T::one();
        let corr1 = one - b1.powi(self.step as i32);
        let corr2 = one - b2.powi(self.step as i32);
        let lr = rl::<T>(self.cfg.learning_rate);
        let eps = rl::<T>(self.cfg.epsilon);
        for i in 0..theta.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / corr1;
            let v_hat = self.v[i] / corr2;
            theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                what: "parameter".into(),
                detail: format!("component {i} is {} after optimizer step {}", theta[i], self.step),
            });
        }
        Ok(())
    }
}
