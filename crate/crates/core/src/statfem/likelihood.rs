use nalgebra::{DMatrix, DVector};

use super::field::GaussianField;
use super::hyper::Hyperparameters;
use super::kernel::{kernel_from_distances, log_kernel_derivatives_from, row_distances};
use super::observations::ObservationSet;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_inner, robust_cholesky};
use crate::mesh_fem::Projection;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Sensor-space sufficient statistics for the negative log marginal likelihood.
///
/// With m = Hμ_u, G = H C_u Hᵀ, Ȳ the reading mean and S the centered scatter
/// Σᵢ(Yᵢ − Ȳ)(Yᵢ − Ȳ)ᵀ, every evaluation costs O(n_y³) independent of n_o:
/// Σᵢ rᵢrᵢᵀ = S + n_o (Ȳ − ρm)(Ȳ − ρm)ᵀ.
#[derive(Debug, Clone)]
pub struct MarginalLikelihood {
    pub n_y: usize,
    pub n_o: usize,
    pub m: DVector<f64>,
    pub g: DMatrix<f64>,
    pub y_mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub sigma_e: f64,
}

/// ϑ and, optionally, (∂ϑ/∂ρ, ∂ϑ/∂ln σ_d, ∂ϑ/∂ln l_d).
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Option<[f64; 3]>,
    pub jitter: f64,
}

impl MarginalLikelihood {
    pub fn new(prior: &GaussianField, h: &Projection, obs: &ObservationSet) -> Result<Self> {
        if h.n_rows() != obs.n_rows() || h.n_dof != prior.dim() {
            return Err(Error::InvalidInput(format!(
                "projection is {}x{}, observations have {} rows, prior has {} DOFs",
                h.n_rows(),
                h.n_dof,
                obs.n_rows(),
                prior.dim()
            )));
        }
        let m = h.apply_vec(&prior.mean);
        let hc = h.mul_dense(&prior.covariance);
        let g = h.mul_dense(&hc.transpose());
        Self::from_parts(m, crate::linalg::symmetrized(&g), obs)
    }

    /// From the projected prior mean m = Hμ and covariance G = H C Hᵀ.
    pub fn from_parts(m: DVector<f64>, g: DMatrix<f64>, obs: &ObservationSet) -> Result<Self> {
        obs.validate()?;
        let n_y = obs.n_rows();
        if m.len() != n_y || g.nrows() != n_y || g.ncols() != n_y {
            return Err(Error::InvalidInput("projected prior does not match observation rows".into()));
        }
        let y_mean = obs.mean_reading();
        let mut centered = obs.readings.clone();
        for mut col in centered.column_iter_mut() {
            col -= &y_mean;
        }
        let scatter = &centered * centered.transpose();
        Ok(Self {
            n_y,
            n_o: obs.n_reads(),
            m,
            g,
            y_mean,
            scatter,
            d2: row_distances(&obs.row_coords(), &obs.row_components()),
            sigma_e: obs.sigma_e,
        })
    }

    pub fn discrepancy(&self, w: &Hyperparameters) -> DMatrix<f64> {
        kernel_from_distances(&self.d2, w.sigma_d, w.l_d)
    }

    /// Σ = C_d + σ_e² I + ρ² G.
    pub fn covariance(&self, w: &Hyperparameters) -> DMatrix<f64> {
        let mut s = self.discrepancy(w) + &self.g * (w.rho * w.rho);
        for i in 0..self.n_y {
            s[(i, i)] += self.sigma_e * self.sigma_e;
        }
        s
    }

    /// Evaluates at optimizer coordinates x = (ρ, ln σ_d, ln l_d).
    pub fn evaluate(&self, x: [f64; 3], want_gradient: bool) -> Result<Evaluation> {
        let w = Hyperparameters::from_vector(x);
        let non_finite = || Error::NonFiniteObjective {
            rho: x[0],
            ln_sigma_d: x[1],
            ln_l_d: x[2],
        };
        if x.iter().any(|v| v.is_nan()) {
            return Err(non_finite());
        }
        let cd = self.discrepancy(&w);
        let mut sigma = &cd + &self.g * (w.rho * w.rho);
        for i in 0..self.n_y {
            sigma[(i, i)] += self.sigma_e * self.sigma_e;
        }
        let chol = robust_cholesky(&sigma, "marginal covariance")?;
        let n_o = self.n_o as f64;
        let a = &self.y_mean - &self.m * w.rho;
        let sa = chol.solve_vec(&a);
        let s_scatter = chol.solve(&self.scatter);
        let quad = s_scatter.trace() + n_o * a.dot(&sa);
        let value = 0.5 * (n_o * self.n_y as f64 * LN_2PI + n_o * chol.ln_det() + quad);
        if !value.is_finite() {
            return Err(non_finite());
        }
        let gradient = if want_gradient {
            // Q = n_o Σ⁻¹ − Σ⁻¹ RRᵀ Σ⁻¹, formed from two Cholesky solves
            let mut x_mat = s_scatter;
            x_mat += &sa * (a.transpose() * n_o);
            let mut rhs = -x_mat.transpose();
            for i in 0..self.n_y {
                rhs[(i, i)] += n_o;
            }
            let q = chol.solve(&rhs);
            let (ds, dl) = log_kernel_derivatives_from(&self.d2, &cd, x[2]);
            let g_rho = w.rho * frobenius_inner(&q, &self.g) - n_o * self.m.dot(&sa);
            let grad = [g_rho, 0.5 * frobenius_inner(&q, &ds), 0.5 * frobenius_inner(&q, &dl)];
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(non_finite());
            }
            Some(grad)
        } else {
            None
        };
        Ok(Evaluation {
            value,
            gradient,
            jitter: chol.jitter,
        })
    }

    pub fn value(&self, w: &Hyperparameters) -> Result<f64> {
        Ok(self.evaluate(w.to_vector(), false)?.value)
    }

    pub fn gradient(&self, w: &Hyperparameters) -> Result<[f64; 3]> {
        Ok(self.evaluate(w.to_vector(), true)?.gradient.expect("gradient requested"))
    }
}

/// Σ = C_d + C_e + ρ² H C_u Hᵀ, checked for positive definiteness.
pub fn marginal_covariance(prior: &GaussianField, h: &Projection, obs: &ObservationSet, w: &Hyperparameters) -> Result<DMatrix<f64>> {
    let lik = MarginalLikelihood::new(prior, h, obs)?;
    let s = lik.covariance(w);
    robust_cholesky(&s, "marginal covariance")?;
    Ok(s)
}

pub fn neg_log_marginal(w: &Hyperparameters, prior: &GaussianField, h: &Projection, obs: &ObservationSet) -> Result<f64> {
    MarginalLikelihood::new(prior, h, obs)?.value(w)
}

pub fn neg_log_marginal_grad(w: &Hyperparameters, prior: &GaussianField, h: &Projection, obs: &ObservationSet) -> Result<[f64; 3]> {
    MarginalLikelihood::new(prior, h, obs)?.gradient(w)
}

/// Largest relative mismatch between the analytic gradient and central differences
/// (step 1e-6 relative) at `x`. Components are compared against the gradient's
/// ∞-norm when they are tiny.
pub fn gradient_check(lik: &MarginalLikelihood, x: [f64; 3]) -> Result<f64> {
    let g = lik.evaluate(x, true)?.gradient.expect("gradient requested");
    let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let h = 1e-6 * x[k].abs().max(1.0);
        let (mut xp, mut xm) = (x, x);
        xp[k] += h;
        xm[k] -= h;
        let fd = (lik.evaluate(xp, false)?.value - lik.evaluate(xm, false)?.value) / (2.0 * h);
        let denom = g[k].abs().max(1e-3 * scale).max(f64::MIN_POSITIVE);
        worst = worst.max((fd - g[k]).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::bar_mesh;
    use crate::statfem::field::FieldKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_instance(n_y: usize, n_o: usize, seed: u64, sigma_e: f64) -> (GaussianField, Projection, ObservationSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = bar_mesh(10.0, 1.0, 8, 0.0, 0.0);
        let n = mesh.n_dof();
        let a = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.3);
        let mean = DVector::from_fn(n, |i, _| i as f64 * 0.2);
        let prior = GaussianField::new(mean, &a * a.transpose(), FieldKind::Prior).unwrap();
        let sensors: Vec<[f64; 2]> = (0..n_y).map(|i| [10.0 * (i as f64 + 0.5) / n_y as f64, 0.0]).collect();
        let readings = DMatrix::from_fn(n_y, n_o, |i, _| i as f64 * 0.15 + rng.sample::<f64, _>(StandardNormal) * 0.2);
        let obs = ObservationSet::new(1, sensors, ObservationSet::full_rows(n_y, 1), readings, sigma_e).unwrap();
        let h = obs.projection(&mesh).unwrap();
        (prior, h, obs)
    }

    /// ϑ from the per-reading sum with an explicitly inverted Σ.
    fn explicit_inverse(prior: &GaussianField, h: &Projection, obs: &ObservationSet, w: &Hyperparameters) -> f64 {
        let hd = h.to_dense();
        let mut sigma = kernel_from_distances(
            &row_distances(&obs.row_coords(), &obs.row_components()),
            w.sigma_d,
            w.l_d,
        ) + &hd * &prior.covariance * hd.transpose() * (w.rho * w.rho);
        for i in 0..obs.n_rows() {
            sigma[(i, i)] += obs.sigma_e.powi(2);
        }
        let inv = sigma.clone().try_inverse().unwrap();
        let det = sigma.determinant();
        let mu = &hd * &prior.mean * w.rho;
        let (n_y, n_o) = (obs.n_rows() as f64, obs.n_reads() as f64);
        let quad: f64 = obs
            .readings
            .column_iter()
            .map(|y| {
                let r = y - &mu;
                (r.transpose() * &inv * &r)[(0, 0)]
            })
            .sum();
        0.5 * (n_o * n_y * (2.0 * std::f64::consts::PI).ln() + n_o * det.ln() + quad)
    }

    #[test]
    fn matches_explicit_inverse() {
        for (seed, n_y, n_o) in [(1, 4, 3), (2, 7, 1), (3, 12, 5)] {
            let (prior, h, obs) = random_instance(n_y, n_o, seed, 0.3);
            let w = Hyperparameters::new(0.8, 0.5, 1.7).unwrap();
            let fast = neg_log_marginal(&w, &prior, &h, &obs).unwrap();
            let slow = explicit_inverse(&prior, &h, &obs, &w);
            assert!(((fast - slow) / slow).abs() < 1e-10, "{fast} vs {slow}");
        }
    }

    #[test]
    fn scalar_case_is_gaussian_density() {
        let prior = GaussianField::new(DVector::from_vec(vec![2.0]), DMatrix::from_element(1, 1, 0.5), FieldKind::Prior).unwrap();
        let h = Projection { dim: 1, n_dof: 1, rows: vec![vec![(0, 1.0)]], locations: vec![(0, [0.0, 0.0])] };
        let obs = ObservationSet::new(1, vec![[0.0, 0.0]], vec![(0, 0)], DMatrix::from_element(1, 1, 3.1), 0.2).unwrap();
        let w = Hyperparameters::new(1.3, 0.4, 1.0).unwrap();
        let var: f64 = 0.16 + 0.04 + 1.69 * 0.5;
        let r: f64 = 3.1 - 1.3 * 2.0;
        let expect = 0.5 * ((2.0 * std::f64::consts::PI).ln() + var.ln() + r * r / var);
        assert!((neg_log_marginal(&w, &prior, &h, &obs).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_residual_leaves_log_determinant() {
        let (prior, h, obs) = random_instance(5, 2, 4, 0.3);
        let w = Hyperparameters::new(0.9, 0.3, 2.0).unwrap();
        let mu = h.apply_vec(&prior.mean) * w.rho;
        let mut exact = obs.clone();
        for mut c in exact.readings.column_iter_mut() {
            c.copy_from(&mu);
        }
        let lik = MarginalLikelihood::new(&prior, &h, &exact).unwrap();
        let chol = robust_cholesky(&lik.covariance(&w), "t").unwrap();
        let expect = 0.5 * (2.0 * 5.0 * LN_2PI + 2.0 * chol.ln_det());
        assert!((lik.value(&w).unwrap() - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn reading_factorization() {
        // ϑ over n_o readings = Σ per-reading ϑ (each carries its own constant terms)
        let (prior, h, obs) = random_instance(6, 3, 5, 0.25);
        let w = Hyperparameters::new(1.1, 0.6, 1.2).unwrap();
        let total = neg_log_marginal(&w, &prior, &h, &obs).unwrap();
        let parts: f64 = (0..3)
            .map(|i| {
                let single = ObservationSet { readings: obs.readings.columns(i, 1).into_owned(), ..obs.clone() };
                neg_log_marginal(&w, &prior, &h, &single).unwrap()
            })
            .sum();
        assert!(((total - parts) / total).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (prior, h, obs) = random_instance(9, 4, 6, 0.1);
        let lik = MarginalLikelihood::new(&prior, &h, &obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = [rng.random_range(0.3..2.0), rng.random_range(-2.0..0.5), rng.random_range(-0.5..1.5)];
            let err = gradient_check(&lik, x).unwrap();
            assert!(err < 1e-5, "{x:?}: {err}");
        }
    }
}
