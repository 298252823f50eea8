use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters (μ_κ, σ_κ) of the underlying normal for a lognormal with mean μ_E
/// and standard deviation σ_E.
pub fn lognormal_transform(mu_e: f64, sigma_e: f64) -> Result<(f64, f64)> {
    if !(mu_e > 0.0 && mu_e.is_finite()) || !(sigma_e >= 0.0 && sigma_e.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lognormal needs mu > 0 and sigma >= 0, got mu = {mu_e}, sigma = {sigma_e}"
        )));
    }
    let ratio = (sigma_e / mu_e).powi(2);
    let mu_k = mu_e.ln() - 0.5 * ratio.ln_1p();
    let sigma_k = ratio.ln_1p().sqrt();
    Ok((mu_k, sigma_k))
}

/// Lognormal Young's modulus E(ξ) = exp(μ_κ + σ_κ ξ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LognormalInput {
    pub mu: f64,
    pub sigma: f64,
    /// Truncation order P_E of the Hermite expansion.
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    4
}

impl LognormalInput {
    pub fn new(mu: f64, sigma: f64, order: usize) -> Result<Self> {
        lognormal_transform(mu, sigma)?;
        Ok(Self { mu, sigma, order })
    }

    pub fn kappa(&self) -> (f64, f64) {
        lognormal_transform(self.mu, self.sigma).expect("validated lognormal parameters")
    }

    /// Exact value at germ ξ.
    pub fn sample(&self, xi: f64) -> f64 {
        let (mk, sk) = self.kappa();
        (mk + sk * xi).exp()
    }

    /// Value of the truncated expansion at ξ.
    pub fn truncated(&self, xi: f64) -> f64 {
        let c = lognormal_pc(self);
        super::hermite::hermite_all(self.order, xi)
            .iter()
            .zip(&c)
            .map(|(p, c)| p * c)
            .sum()
    }
}

/// Coefficients of E(ξ) against the normalized Hermite basis: c_i = μ_E σ_κ^i / √(i!).
pub fn lognormal_pc(input: &LognormalInput) -> Vec<f64> {
    let (_, sk) = input.kappa();
    let mut out = Vec::with_capacity(input.order + 1);
    let mut c = input.mu;
    for i in 0..=input.order {
        if i > 0 {
            c *= sk / (i as f64).sqrt();
        }
        out.push(c);
    }
    out
}
