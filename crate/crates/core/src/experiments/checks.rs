use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::pipeline::Setup;
use crate::error::Result;
use crate::mesh_fem::MaterialModel;
use crate::statfem::{gradient_check, Hyperparameters, MarginalLikelihood};

/// Random optimizer-space points (ρ, ln σ_d, ln l_d) scattered around `center`.
/// A zero σ_d is replaced by 0.1 so the log coordinate stays finite.
pub fn gradient_points(center: &Hyperparameters, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ls = center.sigma_d.max(0.1).ln();
    let ll = center.l_d.ln();
    (0..n)
        .map(|_| {
            let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
            [center.rho * (0.3 * z[0]).exp(), ls + 0.5 * z[1], ll + 0.5 * z[2]]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub model: MaterialModel,
    pub points: Vec<[f64; 3]>,
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
}

/// Analytic against central-difference gradients of ϑ on the scenario's own prior
/// and synthetic data, for every model.
pub fn run_gradcheck(s: &Scenario, n_points: usize) -> Result<Vec<GradientCheck>> {
    let setup = Setup::new(s)?;
    let mut priors = Vec::new();
    for &m in &s.models {
        priors.push((m, setup.prior(m)?));
    }
    let truth = if s.kind.is_bar() {
        setup.bar_truth()?
    } else {
        let sv = match priors.iter().find(|(m, _)| *m == MaterialModel::StVenantKirchhoff) {
            Some((_, p)) => p.clone(),
            None => setup.prior(MaterialModel::StVenantKirchhoff)?,
        };
        setup.plate_truth(&sv)
    };
    let obs = setup.observations(&truth)?;
    let points = gradient_points(&s.generating, n_points, s.seed);
    let mut out = Vec::new();
    for (m, prior) in &priors {
        let lik = MarginalLikelihood::new(prior, &setup.h, &obs)?;
        let errs = points.iter().map(|&x| gradient_check(&lik, x)).collect::<Result<Vec<_>>>()?;
        out.push(GradientCheck {
            model: *m,
            points: points.clone(),
            max_relative_error: errs.iter().cloned().fold(0.0, f64::max),
            relative_errors: errs,
        });
    }
    Ok(out)
}
