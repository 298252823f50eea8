use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrepancy hyperparameters w = (ρ, σ_d, l_d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub rho: f64,
    pub sigma_d: f64,
    pub l_d: f64,
}

impl Hyperparameters {
    pub fn new(rho: f64, sigma_d: f64, l_d: f64) -> Result<Self> {
        let w = Self { rho, sigma_d, l_d };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite())
            || !(self.sigma_d >= 0.0 && self.sigma_d.is_finite())
            || !(self.l_d > 0.0 && self.l_d.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "hyperparameters need rho > 0, sigma_d >= 0, l_d > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn ln_sigma_d(&self) -> f64 {
        self.sigma_d.ln()
    }

    pub fn ln_l_d(&self) -> f64 {
        self.l_d.ln()
    }

    /// Optimizer coordinates (ρ, ln σ_d, ln l_d).
    pub fn to_vector(&self) -> [f64; 3] {
        [self.rho, self.ln_sigma_d(), self.ln_l_d()]
    }

    pub fn from_vector(x: [f64; 3]) -> Self {
        Self {
            rho: x[0],
            sigma_d: x[1].exp(),
            l_d: x[2].exp(),
        }
    }
}

/// Outcome of hyperparameter estimation, serialized as the result JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub rho: f64,
    pub sigma_d: f64,
    pub l_d: f64,
    pub neg_log_marginal: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Why the winning start stopped.
    pub termination: String,
}

impl EstimationResult {
    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            rho: self.rho,
            sigma_d: self.sigma_d,
            l_d: self.l_d,
        }
    }
}
