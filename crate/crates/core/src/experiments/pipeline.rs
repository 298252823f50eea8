use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::Scenario;
use crate::chaos::{multi_index_set, pc_moments, propagate_prior, PCExpansion};
use crate::error::{Error, Result};
use crate::mesh_fem::{
    analytic_bar, bar_mesh, make_plate_hole_mesh, node_subsample, projection_matrix, solve, BarProblem,
    MaterialModel, MaterialParams, Mesh, Projection, YoungsProfile,
};
use crate::statfem::{
    estimate_hyperparameters, generate_observations, posterior_update, rmse, true_response, EstimationResult,
    GaussianField, Hyperparameters, ObservationSet, OptimizerOptions, SensorGaussian,
};

/// Independent random streams derived from the scenario seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stage {
    ChaosGerms = 1,
    Readings = 2,
    DataModulus = 3,
}

pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng.next_u64()
}

/// Mesh, sensor layout and projection for a scenario.
#[derive(Debug, Clone)]
pub struct Setup {
    pub scenario: Scenario,
    pub mesh: Mesh,
    /// Mesh node under each sensor (plate layouts only).
    pub sensor_nodes: Option<Vec<usize>>,
    pub sensors: Vec<[f64; 2]>,
    pub rows: Vec<(usize, usize)>,
    pub h: Projection,
}

impl Setup {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let (mesh, sensor_nodes, sensors) = match (&scenario.bar, &scenario.plate) {
            (Some(b), _) => {
                let mesh = bar_mesh(b.length, b.area, b.n_elements, b.tip_load, b.line_load);
                let n = scenario.n_sensors.unwrap_or(2);
                let sensors: Vec<[f64; 2]> = (0..n).map(|i| [b.length * i as f64 / (n - 1) as f64, 0.0]).collect();
                (mesh, None, sensors)
            }
            (None, Some(p)) => {
                let mesh = make_plate_hole_mesh(p.radius, p.length, p.refinement, p.traction)?;
                let ids = node_subsample(&mesh, p.sensor_stride);
                let sensors = ids.iter().map(|&n| mesh.nodes[n]).collect();
                (mesh, Some(ids), sensors)
            }
            (None, None) => return Err(Error::InvalidInput("scenario has neither bar nor plate geometry".into())),
        };
        let rows = ObservationSet::full_rows(sensors.len(), mesh.dim);
        let h = projection_matrix(&mesh, &sensors)?;
        Ok(Self {
            scenario: scenario.clone(),
            mesh,
            sensor_nodes,
            sensors,
            rows,
            h,
        })
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.scenario.plate.map_or(0.0, |p| p.poisson_ratio)
    }

    pub fn material(&self, model: MaterialModel, youngs_modulus: f64) -> Result<MaterialParams> {
        MaterialParams::new(youngs_modulus, self.poisson_ratio(), model)
    }

    /// One deterministic FE solve.
    pub fn forward(&self, model: MaterialModel, youngs_modulus: f64) -> Result<Vec<f64>> {
        let mat = self.material(model, youngs_modulus)?;
        Ok(solve(&self.mesh, &mat, &self.scenario.newton)?.values)
    }

    /// Offline stage: chaos expansion of the displacement under the lognormal modulus.
    pub fn propagate(&self, model: MaterialModel) -> Result<PCExpansion> {
        let s = &self.scenario;
        let basis = multi_index_set(1, s.pc_order)?;
        propagate_prior(
            |e| self.forward(model, e),
            &s.youngs_modulus,
            &basis,
            s.pc_samples,
            stage_seed(s.seed, Stage::ChaosGerms),
        )
    }

    pub fn prior(&self, model: MaterialModel) -> Result<GaussianField> {
        Ok(pc_moments(&self.propagate(model)?))
    }

    fn bar_problem(&self, youngs_modulus: f64) -> Result<BarProblem> {
        let b = self
            .scenario
            .bar
            .ok_or_else(|| Error::InvalidInput("not a bar scenario".into()))?;
        let profile = if b.beta == 0.0 {
            YoungsProfile::Constant { e: youngs_modulus }
        } else {
            YoungsProfile::Exponential { e0: youngs_modulus, beta: b.beta }
        };
        Ok(BarProblem {
            length: b.length,
            area: b.area,
            tip_load: b.tip_load,
            line_load: b.line_load,
            profile,
        })
    }

    fn bar_at_sensors(&self, youngs_modulus: f64) -> Result<Vec<f64>> {
        let p = self.bar_problem(youngs_modulus)?;
        self.sensors.iter().map(|x| analytic_bar(&p, x[0])).collect()
    }

    /// Noise-free bar response at the sensors from the closed form: one column at the
    /// mean modulus, or one column per reading with E₀ drawn from its lognormal.
    pub fn bar_truth(&self) -> Result<DMatrix<f64>> {
        let s = &self.scenario;
        let n_y = self.sensors.len();
        if !s.per_reading_modulus {
            return Ok(DMatrix::from_vec(n_y, 1, self.bar_at_sensors(s.youngs_modulus.mu)?));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(s.seed, Stage::DataModulus));
        let n = s.max_reads();
        let mut truth = DMatrix::zeros(n_y, n);
        for i in 0..n {
            let e = s.youngs_modulus.sample(rng.sample(StandardNormal));
            truth.set_column(i, &DVector::from_vec(self.bar_at_sensors(e)?));
        }
        Ok(truth)
    }

    /// Expected noise-free bar response at the sensors. The closed form scales as
    /// 1/E₀, so its mean is the E₀ = 1 response times E[1/E₀] = exp(σ_κ²/2 − μ_κ).
    pub fn bar_truth_mean(&self) -> Result<DVector<f64>> {
        let s = &self.scenario;
        if !s.per_reading_modulus {
            return Ok(DVector::from_vec(self.bar_at_sensors(s.youngs_modulus.mu)?));
        }
        let (mk, sk) = s.youngs_modulus.kappa();
        let inv_mean = (0.5 * sk * sk - mk).exp();
        Ok(DVector::from_vec(self.bar_at_sensors(1.0)?) * inv_mean)
    }

    /// Synthetic readings ρ·truth + d + e for the scenario's generating hyperparameters.
    pub fn observations(&self, truth: &DMatrix<f64>) -> Result<ObservationSet> {
        let s = &self.scenario;
        let mut obs = generate_observations(
            truth,
            self.mesh.dim,
            self.sensors.clone(),
            self.rows.clone(),
            &s.generating,
            s.noise_variance.sqrt(),
            s.max_reads(),
            stage_seed(s.seed, Stage::Readings),
        )?;
        if let Some(ids) = &self.sensor_nodes {
            obs.sensor_ids = ids.clone();
        }
        Ok(obs)
    }

    /// Plate data: the SV chaos mean at the sensors.
    pub fn plate_truth(&self, sv_prior: &GaussianField) -> DMatrix<f64> {
        let v = self.h.apply_vec(&sv_prior.mean);
        DMatrix::from_column_slice(v.len(), 1, v.as_slice())
    }
}

/// Online stage for one prior and one observation set.
#[derive(Debug, Clone)]
pub struct Inference {
    pub estimate: EstimationResult,
    pub posterior: GaussianField,
    pub response: SensorGaussian,
    pub rmse: f64,
}

impl Inference {
    pub fn hyperparameters(&self) -> Hyperparameters {
        self.estimate.hyperparameters()
    }
}

/// Hyperparameter estimation followed by conditioning. No FE solve happens here.
pub fn condition(
    prior: &GaussianField,
    h: &Projection,
    obs: &ObservationSet,
    initial: &Hyperparameters,
    opts: &OptimizerOptions,
) -> Result<Inference> {
    let lik = crate::statfem::MarginalLikelihood::new(prior, h, obs)?;
    let estimate = estimate_hyperparameters(&lik, initial, opts)?;
    let w = estimate.hyperparameters();
    let posterior = posterior_update(prior, h, obs, &w)?;
    let response = true_response(&posterior, h, obs, &w);
    let rmse = rmse(&response.mean, obs)?;
    Ok(Inference {
        estimate,
        posterior,
        response,
        rmse,
    })
}
