use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::field::{FieldKind, GaussianField, SensorGaussian};
use super::hyper::Hyperparameters;
use super::kernel::kernel_matrix;
use super::observations::ObservationSet;
use crate::error::{Error, Result};
use crate::linalg::{robust_cholesky, symmetrize};
use crate::mesh_fem::Projection;

fn noise_covariance(obs: &ObservationSet, w: &Hyperparameters) -> DMatrix<f64> {
    let mut s = kernel_matrix(&obs.row_coords(), &obs.row_components(), w.sigma_d, w.l_d);
    for i in 0..obs.n_rows() {
        s[(i, i)] += obs.sigma_e * obs.sigma_e;
    }
    s
}

fn check_shapes(prior: &GaussianField, h: &Projection, obs: &ObservationSet) -> Result<()> {
    obs.validate()?;
    if h.n_rows() != obs.n_rows() || h.n_dof != prior.dim() {
        return Err(Error::InvalidInput(format!(
            "projection is {}x{}, observations have {} rows, prior has {} DOFs",
            h.n_rows(),
            h.n_dof,
            obs.n_rows(),
            prior.dim()
        )));
    }
    Ok(())
}

/// Posterior of the scaled displacement ρu given all readings, in sensor space:
/// with B = ρ²C_u and M = H B Hᵀ + (C_d + C_e)/n_o,
/// μ = ρμ_u + B Hᵀ M⁻¹ (Ȳ − ρHμ_u) and C = B − B Hᵀ M⁻¹ H B.
/// Equal to the precision form (n_o Hᵀ S⁻¹ H + (ρ²C_u)⁻¹)⁻¹ without inverting C_u,
/// so rank-deficient chaos priors are handled.
pub fn posterior_update(prior: &GaussianField, h: &Projection, obs: &ObservationSet, w: &Hyperparameters) -> Result<GaussianField> {
    check_shapes(prior, h, obs)?;
    w.validate()?;
    let n_o = obs.n_reads() as f64;
    let rho2 = w.rho * w.rho;
    let b = &prior.covariance * rho2;
    let hb = h.mul_dense(&b);
    let mut m = h.mul_dense(&hb.transpose()) + noise_covariance(obs, w) / n_o;
    symmetrize(&mut m);
    let chol = robust_cholesky(&m, "sensor-space posterior system")?;
    let resid = obs.mean_reading() - h.apply_vec(&prior.mean) * w.rho;
    let mean = &prior.mean * w.rho + hb.transpose() * chol.solve_vec(&resid);
    let mut cov = b - hb.transpose() * chol.solve(&hb);
    symmetrize(&mut cov);
    GaussianField::new(mean, cov, FieldKind::Posterior)
}

/// The precision-form posterior evaluated literally with dense inverses. Needs a
/// nonsingular prior covariance; kept as the reference for the sensor-space path.
pub fn posterior_update_dense(prior: &GaussianField, h: &Projection, obs: &ObservationSet, w: &Hyperparameters) -> Result<GaussianField> {
    check_shapes(prior, h, obs)?;
    w.validate()?;
    let n_o = obs.n_reads() as f64;
    let hd = h.to_dense();
    let s_chol = robust_cholesky(&noise_covariance(obs, w), "discrepancy plus noise covariance")?;
    let cu_chol = robust_cholesky(&prior.covariance, "prior covariance")?;
    let cu_inv = cu_chol.solve(&DMatrix::identity(prior.dim(), prior.dim()));
    let s_inv_h = s_chol.solve(&hd);
    let precision = hd.transpose() * &s_inv_h * n_o + &cu_inv / (w.rho * w.rho);
    let p_chol = robust_cholesky(&precision, "posterior precision")?;
    let mut cov = p_chol.solve(&DMatrix::identity(prior.dim(), prior.dim()));
    symmetrize(&mut cov);
    let ysum = obs.readings.column_sum();
    let rhs = s_inv_h.transpose() * ysum + &cu_inv * &prior.mean / w.rho;
    let mean = &cov * rhs;
    GaussianField::new(mean, cov, FieldKind::Posterior)
}

/// True system response at the sensors: mean Hμ, covariance H C Hᵀ + C_d.
pub fn true_response(posterior: &GaussianField, h: &Projection, obs: &ObservationSet, w: &Hyperparameters) -> SensorGaussian {
    let mean = h.apply_vec(&posterior.mean);
    let hc = h.mul_dense(&posterior.covariance);
    let mut cov = h.mul_dense(&hc.transpose()) + kernel_matrix(&obs.row_coords(), &obs.row_components(), w.sigma_d, w.l_d);
    symmetrize(&mut cov);
    SensorGaussian { mean, covariance: cov }
}

/// Draws N(0, C) samples through an eigendecomposition, so a numerically
/// semidefinite kernel matrix needs no jitter.
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &DMatrix<f64>) -> Self {
        let eig = cov.clone().symmetric_eigen();
        let mut factor = eig.eigenvectors;
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        Self { factor }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.factor * z
    }
}

/// Synthetic readings Yᵢ = ρ truthᵢ + dᵢ + eᵢ with dᵢ ~ N(0, C_d) and eᵢ ~ N(0, σ_e² I)
/// drawn independently for every reading. `truth` has one column per reading, or a
/// single column shared by all readings. Returns n_y × n_reads.
pub fn generate_readings(
    truth: &DMatrix<f64>,
    coords: &[[f64; 2]],
    components: &[usize],
    w: &Hyperparameters,
    sigma_e: f64,
    n_reads: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    w.validate()?;
    let n_y = coords.len();
    if n_reads == 0 || truth.nrows() != n_y || (truth.ncols() != 1 && truth.ncols() != n_reads) {
        return Err(Error::InvalidInput(format!(
            "truth is {}x{}, expected {n_y} rows and 1 or {n_reads} columns",
            truth.nrows(),
            truth.ncols()
        )));
    }
    let sampler = GaussianSampler::new(&kernel_matrix(coords, components, w.sigma_d, w.l_d));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = DMatrix::zeros(n_y, n_reads);
    for i in 0..n_reads {
        let t = truth.column(if truth.ncols() == 1 { 0 } else { i });
        let d = sampler.sample(&mut rng);
        for r in 0..n_y {
            let e: f64 = rng.sample(StandardNormal);
            y[(r, i)] = w.rho * t[r] + d[r] + sigma_e * e;
        }
    }
    Ok(y)
}

/// Builds an [`ObservationSet`] from generated readings.
pub fn generate_observations(
    truth: &DMatrix<f64>,
    dim: usize,
    sensors: Vec<[f64; 2]>,
    rows: Vec<(usize, usize)>,
    w: &Hyperparameters,
    sigma_e: f64,
    n_reads: usize,
    seed: u64,
) -> Result<ObservationSet> {
    let coords: Vec<[f64; 2]> = rows.iter().map(|&(s, _)| sensors[s]).collect();
    let comps: Vec<usize> = rows.iter().map(|&(_, c)| c).collect();
    let readings = generate_readings(truth, &coords, &comps, w, sigma_e, n_reads, seed)?;
    ObservationSet::new(dim, sensors, rows, readings, sigma_e)
}

/// (1/n_o) Σᵢ √(‖μ_z − Yᵢ‖² / n_s) with n_s the number of sensors.
pub fn rmse(z_mean: &DVector<f64>, obs: &ObservationSet) -> Result<f64> {
    if z_mean.len() != obs.n_rows() {
        return Err(Error::InvalidInput(format!(
            "mean has {} entries, observations have {} rows",
            z_mean.len(),
            obs.n_rows()
        )));
    }
    let ns = obs.n_sensors() as f64;
    let total: f64 = obs
        .readings
        .column_iter()
        .map(|y| ((y - z_mean).norm_squared() / ns).sqrt())
        .sum();
    Ok(total / obs.n_reads() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::mesh_fem::bar_mesh;

    fn instance(n_y: usize, n_o: usize, seed: u64) -> (GaussianField, Projection, ObservationSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = bar_mesh(10.0, 1.0, 6, 0.0, 0.0);
        let n = mesh.n_dof();
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.2);
        let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.05;
        let prior = GaussianField::new(DVector::from_fn(n, |i, _| 0.3 * i as f64), cov, FieldKind::Prior).unwrap();
        let sensors: Vec<[f64; 2]> = (0..n_y).map(|i| [10.0 * i as f64 / (n_y - 1) as f64, 0.0]).collect();
        let readings = DMatrix::from_fn(n_y, n_o, |i, _| 0.25 * i as f64 + 0.1 * rng.sample::<f64, _>(StandardNormal));
        let obs = ObservationSet::new(1, sensors, ObservationSet::full_rows(n_y, 1), readings, 0.1).unwrap();
        let h = obs.projection(&mesh).unwrap();
        (prior, h, obs)
    }

    #[test]
    fn sensor_space_matches_dense() {
        for (seed, n_y, n_o) in [(1, 4, 1), (2, 5, 10), (3, 7, 30)] {
            let (prior, h, obs) = instance(n_y, n_o, seed);
            let w = Hyperparameters::new(0.8, 0.3, 2.5).unwrap();
            let fast = posterior_update(&prior, &h, &obs, &w).unwrap();
            let dense = posterior_update_dense(&prior, &h, &obs, &w).unwrap();
            assert!((&fast.mean - &dense.mean).amax() < 1e-8);
            assert!((&fast.covariance - &dense.covariance).amax() < 1e-8);
        }
    }

    #[test]
    fn contraction_and_true_response() {
        let (prior, h, obs) = instance(5, 10, 4);
        let w = Hyperparameters::new(1.2, 0.4, 3.0).unwrap();
        let post = posterior_update(&prior, &h, &obs, &w).unwrap();
        let diff = &prior.covariance * (w.rho * w.rho) - &post.covariance;
        assert!(min_eigenvalue(&diff) >= -1e-10 * diff.trace().abs().max(1.0));
        let z = true_response(&post, &h, &obs, &w);
        let hc = h.mul_dense(&h.mul_dense(&post.covariance).transpose());
        for i in 0..5 {
            assert!(z.covariance[(i, i)] >= hc[(i, i)]);
        }
        let w0 = Hyperparameters::new(1.2, 0.0, 3.0).unwrap();
        let z0 = true_response(&post, &h, &obs, &w0);
        assert!((z0.covariance - hc).amax() < 1e-14);
    }

    #[test]
    fn self_consistent_data_is_a_fixed_point() {
        let (prior, h, mut obs) = instance(5, 3, 5);
        let w = Hyperparameters::new(1.0, 0.2, 1.0).unwrap();
        let hm = h.apply_vec(&prior.mean);
        for mut c in obs.readings.column_iter_mut() {
            c.copy_from(&hm);
        }
        let post = posterior_update(&prior, &h, &obs, &w).unwrap();
        assert!((h.apply_vec(&post.mean) - hm).amax() < 1e-12);
    }

    #[test]
    fn noiseless_full_observation_recovers_reading_mean() {
        let mesh = bar_mesh(4.0, 1.0, 4, 0.0, 0.0);
        let n = mesh.n_dof();
        let prior = GaussianField::new(DVector::zeros(n), DMatrix::identity(n, n), FieldKind::Prior).unwrap();
        let sensors: Vec<[f64; 2]> = mesh.nodes.clone();
        let readings = DMatrix::from_fn(n, 4, |i, j| i as f64 + j as f64 * 0.5);
        let obs = ObservationSet::new(1, sensors, ObservationSet::full_rows(n, 1), readings, 1e-7).unwrap();
        let h = obs.projection(&mesh).unwrap();
        let w = Hyperparameters::new(1.0, 0.0, 1.0).unwrap();
        let post = posterior_update(&prior, &h, &obs, &w).unwrap();
        assert!((&post.mean - obs.mean_reading()).amax() < 1e-10);
    }

    #[test]
    fn generation_degenerate_and_statistics() {
        let coords: Vec<[f64; 2]> = (0..4).map(|i| [i as f64 * 1.5, 0.0]).collect();
        let comps = vec![0; 4];
        let truth = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let w0 = Hyperparameters::new(0.7, 0.0, 2.0).unwrap();
        let y = generate_readings(&truth, &coords, &comps, &w0, 0.0, 3, 1).unwrap();
        for c in y.column_iter() {
            assert!((c - &truth * 0.7).amax() < 1e-15);
        }
        // law of large numbers on the variance and the cross-sensor covariance
        let w = Hyperparameters::new(0.7, 0.9, 2.0).unwrap();
        let sigma_e = 0.004f64.sqrt();
        let n = 100_000;
        let y = generate_readings(&truth, &coords, &comps, &w, sigma_e, n, 2).unwrap();
        let mean = y.column_mean();
        let mut centered = y.clone();
        for mut c in centered.column_iter_mut() {
            c -= &mean;
        }
        let emp = &centered * centered.transpose() / (n as f64 - 1.0);
        for i in 0..4 {
            let target = 0.81 + 0.004;
            assert!(((emp[(i, i)] - target) / target).abs() < 0.03);
        }
        let mut model = kernel_matrix(&coords, &comps, 0.9, 2.0);
        for i in 0..4 {
            model[(i, i)] += 0.004;
        }
        assert!((&emp - &model).norm() / model.norm() < 0.05);
    }

    #[test]
    fn rmse_hand_values() {
        let obs = ObservationSet::new(1, vec![[0.0, 0.0]], vec![(0, 0)], DMatrix::from_element(1, 1, 3.0), 0.1).unwrap();
        assert!((rmse(&DVector::from_element(1, 1.0), &obs).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(rmse(&DVector::from_element(1, 3.0), &obs).unwrap(), 0.0);
    }
}
