use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chaos::LognormalInput;
use crate::error::{Error, Result};
use crate::mesh_fem::{MaterialModel, NewtonOptions};
use crate::statfem::{Hyperparameters, OptimizerOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    BarHomogeneous,
    BarInhomogeneous,
    PlateSelection,
    StressInference,
}

impl ScenarioKind {
    pub fn is_bar(self) -> bool {
        matches!(self, ScenarioKind::BarHomogeneous | ScenarioKind::BarInhomogeneous)
    }
}

/// Axially loaded bar. Units: mm, mm², kN, kN/mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarGeometry {
    pub length: f64,
    pub area: f64,
    pub tip_load: f64,
    #[serde(default)]
    pub line_load: f64,
    pub n_elements: usize,
    /// Exponent of E(X) = E₀ e^{βX} used for the data (1/mm); 0 for homogeneous data.
    #[serde(default)]
    pub beta: f64,
}

impl Default for BarGeometry {
    fn default() -> Self {
        Self {
            length: 100.0,
            area: 20.0,
            tip_load: 800.0,
            line_load: 0.0,
            n_elements: 32,
            beta: 0.0,
        }
    }
}

/// Quarter plate with a circular hole under uniaxial traction, plane strain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateGeometry {
    pub radius: f64,
    pub length: f64,
    pub refinement: usize,
    pub traction: f64,
    pub poisson_ratio: f64,
    /// Every `sensor_stride`-th node carries a sensor.
    pub sensor_stride: usize,
}

impl Default for PlateGeometry {
    fn default() -> Self {
        Self {
            radius: 0.4,
            length: 4.0,
            refinement: 4,
            traction: 100.0,
            poisson_ratio: 0.25,
            sensor_stride: 10,
        }
    }
}

/// Scenario as written by a user; omitted fields take per-kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    #[serde(default)]
    pub bar: Option<BarGeometry>,
    #[serde(default)]
    pub plate: Option<PlateGeometry>,
    #[serde(default)]
    pub models: Option<Vec<MaterialModel>>,
    #[serde(default)]
    pub youngs_modulus: Option<LognormalInput>,
    #[serde(default)]
    pub pc_order: Option<usize>,
    #[serde(default)]
    pub pc_samples: Option<usize>,
    /// Number of equally spaced sensors along the bar.
    #[serde(default)]
    pub n_sensors: Option<usize>,
    #[serde(default)]
    pub generating: Option<Hyperparameters>,
    /// σ_e², known.
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default)]
    pub n_reads: Option<Vec<usize>>,
    /// Bar data: draw E₀ from its lognormal for every reading instead of using its mean.
    #[serde(default)]
    pub per_reading_modulus: Option<bool>,
    #[serde(default)]
    pub initial: Option<Hyperparameters>,
    #[serde(default)]
    pub optimizer: Option<OptimizerOptions>,
    #[serde(default)]
    pub newton: Option<NewtonOptions>,
}

/// Fully resolved scenario; this is what gets written as the effective config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub bar: Option<BarGeometry>,
    pub plate: Option<PlateGeometry>,
    pub models: Vec<MaterialModel>,
    pub youngs_modulus: LognormalInput,
    pub pc_order: usize,
    pub pc_samples: usize,
    pub n_sensors: Option<usize>,
    pub generating: Hyperparameters,
    pub noise_variance: f64,
    pub n_reads: Vec<usize>,
    pub per_reading_modulus: bool,
    pub initial: Hyperparameters,
    pub optimizer: OptimizerOptions,
    pub newton: NewtonOptions,
}

impl ScenarioConfig {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json(source, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Minimal config of the given kind with every default.
    pub fn defaults(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            name: format!("{kind:?}").to_lowercase(),
            kind,
            seed,
            bar: None,
            plate: None,
            models: None,
            youngs_modulus: None,
            pc_order: None,
            pc_samples: None,
            n_sensors: None,
            generating: None,
            noise_variance: None,
            n_reads: None,
            per_reading_modulus: None,
            initial: None,
            optimizer: None,
            newton: None,
        }
    }

    pub fn resolve(&self) -> Result<Scenario> {
        use ScenarioKind::*;
        let kind = self.kind;
        if kind.is_bar() && self.plate.is_some() {
            return Err(Error::InvalidInput(format!("scenario '{}' is a bar scenario but has a plate section", self.name)));
        }
        if !kind.is_bar() && (self.bar.is_some() || self.n_sensors.is_some() || self.per_reading_modulus == Some(true)) {
            return Err(Error::InvalidInput(format!(
                "scenario '{}' is a plate scenario but has bar settings",
                self.name
            )));
        }
        let bar = kind.is_bar().then(|| {
            self.bar.unwrap_or(BarGeometry {
                beta: if kind == BarInhomogeneous { 0.015 } else { 0.0 },
                ..BarGeometry::default()
            })
        });
        let plate = (!kind.is_bar()).then(|| self.plate.unwrap_or_default());
        let models = self.models.clone().unwrap_or_else(|| match kind {
            BarHomogeneous | BarInhomogeneous => vec![MaterialModel::LinearElastic],
            PlateSelection | StressInference => vec![MaterialModel::LinearElastic, MaterialModel::StVenantKirchhoff],
        });
        let youngs_modulus = match self.youngs_modulus {
            Some(y) => y,
            None if kind.is_bar() => LognormalInput::new(200.0, 10.0, 4)?,
            None => LognormalInput::new(200.0, 20.0, 4)?,
        };
        let pc_order = self.pc_order.unwrap_or(if kind.is_bar() { 5 } else { 9 });
        let n_terms = pc_order + 1;
        // the plate setup uses S = 2P regression points, the bar the general 2(P + 1)
        let pc_samples = self.pc_samples.unwrap_or(if kind.is_bar() { 2 * n_terms } else { 2 * pc_order });
        let generating = match self.generating {
            Some(w) => w,
            None => match kind {
                BarHomogeneous => Hyperparameters::new(0.7, 0.9, 2.0)?,
                BarInhomogeneous => Hyperparameters::new(1.2, 0.9, 4.0)?,
                PlateSelection => Hyperparameters::new(1.5, 0.2, 2.0)?,
                StressInference => Hyperparameters::new(1.0, 0.0, 2.0)?,
            },
        };
        let noise_variance = self.noise_variance.unwrap_or(match kind {
            BarHomogeneous => 0.004,
            BarInhomogeneous => 0.04,
            PlateSelection => 4e-4,
            StressInference => 1e-10,
        });
        let n_reads = self.n_reads.clone().unwrap_or_else(|| match kind {
            BarHomogeneous => vec![1, 10, 100],
            BarInhomogeneous => vec![100],
            PlateSelection | StressInference => vec![50],
        });
        let scenario = Scenario {
            name: self.name.clone(),
            kind,
            seed: self.seed,
            bar,
            plate,
            models,
            youngs_modulus,
            pc_order,
            pc_samples,
            n_sensors: kind.is_bar().then(|| self.n_sensors.unwrap_or(33)),
            generating,
            noise_variance,
            n_reads,
            per_reading_modulus: self.per_reading_modulus.unwrap_or(kind == BarInhomogeneous),
            initial: self.initial.unwrap_or(Hyperparameters { rho: 1.0, sigma_d: 1.0, l_d: 1.0 }),
            optimizer: self.optimizer.unwrap_or(OptimizerOptions {
                seed: self.seed,
                ..OptimizerOptions::default()
            }),
            newton: self.newton.unwrap_or_default(),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("scenario '{}': {msg}", self.name)));
        if self.models.is_empty() {
            return bad("no material model given".into());
        }
        if self.kind.is_bar() && self.models.iter().any(|&m| m != MaterialModel::LinearElastic) {
            return bad("bar scenarios support only the LE model".into());
        }
        lognormal_check(&self.youngs_modulus)?;
        if self.pc_order == 0 || self.pc_samples < self.pc_order + 1 {
            return bad(format!(
                "need pc_order >= 1 and at least pc_order + 1 = {} samples, got {}",
                self.pc_order + 1,
                self.pc_samples
            ));
        }
        self.generating.validate()?;
        self.initial.validate()?;
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return bad(format!("noise variance must be positive, got {}", self.noise_variance));
        }
        if self.n_reads.is_empty() || self.n_reads.contains(&0) {
            return bad("n_reads must list positive counts".into());
        }
        if let Some(b) = &self.bar {
            if !(b.length > 0.0 && b.area > 0.0 && b.n_elements > 0 && b.beta.is_finite() && b.tip_load.is_finite()) {
                return bad(format!("invalid bar geometry {b:?}"));
            }
            if self.n_sensors.unwrap_or(0) < 2 {
                return bad("bar needs at least two sensors".into());
            }
        }
        if let Some(p) = &self.plate {
            if p.sensor_stride == 0 || !(p.poisson_ratio > -1.0 && p.poisson_ratio < 0.5) {
                return bad(format!("invalid plate settings {p:?}"));
            }
        }
        Ok(())
    }

    pub fn max_reads(&self) -> usize {
        *self.n_reads.iter().max().expect("validated non-empty")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

fn lognormal_check(y: &LognormalInput) -> Result<()> {
    LognormalInput::new(y.mu, y.sigma, y.order).map(|_| ())
}
