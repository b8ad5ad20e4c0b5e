//! Adam-style update with first and second moment tracking.
//!
//! Here `beta1` and `beta2` weight the *new* gradient:
//! `v1 ← (1−β₁)v1 + β₁G`, `v2 ← (1−β₂)v2 + β₂G²`,
//! `W ← W − η·v1/(√v2 + ε₀)`. Bias correction is off unless requested.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps0: f64,
    pub bias_correction: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            beta1: 0.1,
            beta2: 0.01,
            eps0: 1e-8,
            bias_correction: false,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b <= 1.0;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::Config(format!(
                "beta1 and beta2 must lie in (0, 1], got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps0 >= 0.0 && self.eps0.is_finite()) {
            return Err(Error::Config(format!("eps0 must be nonnegative, got {}", self.eps0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub v1: Vec<T>,
    pub v2: Vec<T>,
    pub config: AdamConfig,
    /// Number of completed steps.
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            v1: vec![T::zero(); num_params],
            v2: vec![T::zero(); num_params],
            config,
            t: 0,
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        let n = self.v1.len();
        if params.len() != n || grad.len() != n {
            return Err(Error::dims("adam_step", n, params.len().max(grad.len())));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {i} at step {} is {}",
                self.t + 1,
                grad[i]
            )));
        }
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (eta, eps0) = (T::lit(c.eta), T::lit(c.eps0));
        let one = T::one();
        self.t += 1;
        let (corr1, corr2) = if c.bias_correction {
            let t = self.t as i32;
            (one - (one - b1).powi(t), one - (one - b2).powi(t))
        } else {
            (one, one)
        };
        for i in 0..n {
            let g = grad[i];
            self.v1[i] = (one - b1) * self.v1[i] + b1 * g;
            self.v2[i] = (one - b2) * self.v2[i] + b2 * g * g;
            let m = self.v1[i] / corr1;
            let v = self.v2[i] / corr2;
            if m != T::zero() {
                params[i] -= eta * (m / (v.sqrt() + eps0));
            }
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: self.t,
                what: format!("parameter {i}"),
            });
        }
        Ok(())
    }
}
