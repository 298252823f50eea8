use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constitutive law used by a forward solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaterialModel {
    /// Small-strain linear elasticity (Cauchy stress).
    #[serde(rename = "LE")]
    LinearElastic,
    /// St. Venant Kirchhoff hyperelasticity (first Piola-Kirchhoff stress).
    #[serde(rename = "SV")]
    StVenantKirchhoff,
}

impl MaterialModel {
    pub fn tag(self) -> &'static str {
        match self {
            MaterialModel::LinearElastic => "LE",
            MaterialModel::StVenantKirchhoff => "SV",
        }
    }
}

impl std::fmt::Display for MaterialModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Deterministic material parameters for a single solve. `youngs_modulus` is in GPa
/// (= kN/mm²) when lengths are in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub model: MaterialModel,
}

impl MaterialParams {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, model: MaterialModel) -> Result<Self> {
        let m = Self {
            youngs_modulus,
            poisson_ratio,
            model,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Young's modulus must be positive, got {}",
                self.youngs_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::InvalidInput(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        Ok(())
    }

    pub fn with_modulus(&self, youngs_modulus: f64) -> Self {
        Self {
            youngs_modulus,
            ..*self
        }
    }

    pub fn plane_strain(&self) -> ConstitutiveMatrix {
        ConstitutiveMatrix::plane_strain(self.youngs_modulus, self.poisson_ratio)
    }
}

/// Voigt-form constitutive matrix D = E·D* (engineering shear strains).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstitutiveMatrix(pub Matrix3<f64>);

impl ConstitutiveMatrix {
    /// Normalized plane-strain matrix D* scaled by `e`.
    pub fn plane_strain(e: f64, nu: f64) -> Self {
        let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
        ConstitutiveMatrix(Matrix3::new(
            f * (1.0 - nu),
            f * nu,
            0.0,
            f * nu,
            f * (1.0 - nu),
            0.0,
            0.0,
            0.0,
            f * (1.0 - 2.0 * nu) / 2.0,
        ))
    }

    /// Stress (Voigt) for a strain in Voigt form [e_xx, e_yy, 2 e_xy].
    pub fn apply(&self, strain: [f64; 3]) -> [f64; 3] {
        let d = &self.0;
        let mut s = [0.0; 3];
        for i in 0..3 {
            s[i] = d[(i, 0)] * strain[0] + d[(i, 1)] * strain[1] + d[(i, 2)] * strain[2];
        }
        s
    }
}

/// Isotropic 3D constitutive matrix E·D* in Voigt order (xx, yy, zz, yz, xz, xy).
/// The solvers are 1D/2D only; this is provided for completeness of the material data.
pub fn constitutive_3d(e: f64, nu: f64) -> Matrix6<f64> {
    let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mut d = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = if i == j { f * (1.0 - nu) } else { f * nu };
        }
        d[(i + 3, i + 3)] = f * (1.0 - 2.0 * nu) / 2.0;
    }
    d
}
