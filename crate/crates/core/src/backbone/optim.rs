use serde::{Deserialize, Serialize};

use super::network::BackboneParams;
use super::real::Real;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
        }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.rho > 0.0 && self.rho < 1.0,
            InvalidConfig,
            "rho must lie in (0, 1), got {}",
            self.rho
        );
        ensure!(self.eps > 0.0, InvalidConfig, "eps must be positive, got {}", self.eps);
        ensure!(
            self.lr.is_finite() && self.lr > 0.0,
            InvalidConfig,
            "learning rate must be positive, got {}",
            self.lr
        );
        Ok(())
    }
}

/// One scalar ADADELTA update. Returns the step `Δ` (before scaling by the
/// learning rate) and updates both running averages in place.
#[inline]
pub fn adadelta_update(eg2: &mut f64, edx2: &mut f64, g: f64, rho: f64, eps: f64) -> f64 {
    *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
    let delta = -((*edx2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
    *edx2 = rho * *edx2 + (1.0 - rho) * delta * delta;
    delta
}

/// Optimizer state: running averages of squared gradients and squared
/// updates, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub config: AdadeltaConfig,
    pub sq_grad: Vec<Vec<f64>>,
    pub sq_delta: Vec<Vec<f64>>,
}

impl Adadelta {
    pub fn new<T: Real>(params: &BackboneParams<T>, config: AdadeltaConfig) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Ok(Self {
            config,
            sq_grad: zeros.clone(),
            sq_delta: zeros,
        })
    }

    pub fn step<T: Real>(&mut self, params: &mut BackboneParams<T>, grads: &BackboneParams<T>) -> Result<()> {
        ensure!(
            params.tensors.len() == grads.tensors.len() && params.tensors.len() == self.sq_grad.len(),
            InvalidInput,
            "parameter, gradient and optimizer tensor counts differ"
        );
        for (i, (p, g)) in params.tensors.iter().zip(&grads.tensors).enumerate() {
            ensure!(
                p.data.len() == g.data.len() && p.data.len() == self.sq_grad[i].len(),
                InvalidInput,
                "shape mismatch on tensor {}",
                p.name
            );
        }
        let AdadeltaConfig { rho, eps, lr } = self.config;
        for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
            let (eg2, edx2) = (&mut self.sq_grad[i], &mut self.sq_delta[i]);
            for (j, (w, &gv)) in p.data.iter_mut().zip(&g.data).enumerate() {
                let delta = adadelta_update(&mut eg2[j], &mut edx2[j], gv.to_f64(), rho, eps);
                *w = T::from_f64(w.to_f64() + lr * delta);
            }
        }
        Ok(())
    }
}
