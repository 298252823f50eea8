use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Prior,
    Posterior,
}

/// Multivariate Gaussian over FE degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub kind: FieldKind,
}

impl GaussianField {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, kind: FieldKind) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "covariance is {}x{}, mean has {n} entries",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self { mean, covariance, kind })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_dev(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Gaussian over sensor components (the true-response posterior).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGaussian {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl SensorGaussian {
    pub fn std_dev(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}
