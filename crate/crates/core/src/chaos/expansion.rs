use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lognormal::LognormalInput;
use super::multi_index::MultiIndexSet;
use crate::error::{Error, Result};
use crate::statfem::field::{FieldKind, GaussianField};

/// Germ draws and the responses they produced, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// S × M
    pub xi: DMatrix<f64>,
    /// S × n_dof
    pub responses: DMatrix<f64>,
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.xi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.nrows() == 0
    }
}

/// Polynomial chaos expansion of a vector response: column j of `coefficients`
/// multiplies Ψ_j (normalized Hermite basis).
#[derive(Debug, Clone, PartialEq)]
pub struct PCExpansion {
    pub basis: MultiIndexSet,
    /// n_dof × (P + 1)
    pub coefficients: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PcRecord {
    #[serde(rename = "M")]
    m: usize,
    p: usize,
    multi_indices: Vec<Vec<usize>>,
    n_dof: usize,
    /// n_dof × (P + 1), row-major
    coefficients: Vec<f64>,
}

impl PCExpansion {
    pub fn n_dof(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn evaluate(&self, xi: &[f64]) -> DVector<f64> {
        let psi = DVector::from_vec(self.basis.eval(xi));
        &self.coefficients * psi
    }

    pub fn mean(&self) -> DVector<f64> {
        self.coefficients.column(0).into_owned()
    }

    /// Σ_{j≥1} u_j u_jᵀ.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.coefficients.ncols();
        let c1 = self.coefficients.columns(1, n - 1);
        &c1 * c1.transpose()
    }

    pub fn to_json(&self) -> String {
        let rec = PcRecord {
            m: self.basis.m,
            p: self.basis.p,
            multi_indices: self.basis.indices.clone(),
            n_dof: self.n_dof(),
            coefficients: self.coefficients.transpose().as_slice().to_vec(),
        };
        serde_json::to_string_pretty(&rec).expect("serializable record")
    }

    pub fn from_json(text: &str, source: &Path) -> Result<Self> {
        let rec: PcRecord = serde_json::from_str(text).map_err(|e| Error::json(source, e))?;
        let basis = super::multi_index::multi_index_set(rec.m, rec.p)?;
        if basis.indices != rec.multi_indices {
            return Err(Error::InvalidInput(format!(
                "{}: multi-indices do not match the graded order for M = {}, p = {}",
                source.display(),
                rec.m,
                rec.p
            )));
        }
        let cols = basis.len();
        if rec.coefficients.len() != rec.n_dof * cols || rec.coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{}: expected {} finite coefficients, found {}",
                source.display(),
                rec.n_dof * cols,
                rec.coefficients.len()
            )));
        }
        Ok(Self {
            coefficients: DMatrix::from_row_slice(rec.n_dof, cols, &rec.coefficients),
            basis,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Sample mean and unbiased sample covariance of the responses.
pub fn mc_moments(samples: &SampleSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let s = samples.responses.nrows();
    if s < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {s}")));
    }
    let mean = samples.responses.row_mean().transpose();
    let mut centered = samples.responses.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (s as f64 - 1.0);
    Ok((mean, cov))
}

/// Least-squares PC coefficients by Householder QR of the design matrix.
pub fn pc_regression(samples: &SampleSet, basis: &MultiIndexSet) -> Result<PCExpansion> {
    let s = samples.xi.nrows();
    let cols = basis.len();
    if samples.xi.ncols() != basis.m || samples.responses.nrows() != s {
        return Err(Error::InvalidInput(format!(
            "sample set has {} germ columns and {} responses for {s} draws; basis expects M = {}",
            samples.xi.ncols(),
            samples.responses.nrows(),
            basis.m
        )));
    }
    if s < cols {
        return Err(Error::RankDeficient { rank: s, columns: cols });
    }
    let mut a = DMatrix::zeros(s, cols);
    for r in 0..s {
        let xi: Vec<f64> = samples.xi.row(r).iter().cloned().collect();
        for (c, v) in basis.eval(&xi).into_iter().enumerate() {
            a[(r, c)] = v;
        }
    }
    let qr = a.qr();
    let rm = qr.r();
    let rmax = rm.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rank = rm.diagonal().iter().filter(|v| v.abs() > 1e-12 * rmax).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, columns: cols });
    }
    let qtz = qr.q().transpose() * &samples.responses;
    let coef = rm
        .solve_upper_triangular(&qtz)
        .ok_or(Error::RankDeficient { rank, columns: cols })?;
    Ok(PCExpansion {
        basis: basis.clone(),
        coefficients: coef.transpose(),
    })
}

/// Mean and covariance of an expansion in the normalized basis.
pub fn pc_moments(expansion: &PCExpansion) -> GaussianField {
    GaussianField {
        mean: expansion.mean(),
        covariance: expansion.covariance(),
        kind: FieldKind::Prior,
    }
}

/// Seeded standard-normal germ draws, S × M, filled row by row.
pub fn draw_germs(s: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = DMatrix::zeros(s, m);
    for r in 0..s {
        for c in 0..m {
            xi[(r, c)] = rng.sample(StandardNormal);
        }
    }
    xi
}

/// Runs `solver(E)` at E = exp(μ_κ + σ_κ ξ₁) for every germ row. Solves run in
/// parallel; results are keyed by sample index so the output does not depend on
/// scheduling.
pub fn sample_responses<F>(solver: F, input: &LognormalInput, xi: DMatrix<f64>, seed: Option<u64>) -> Result<SampleSet>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    let s = xi.nrows();
    let results: Vec<Result<Vec<f64>>> = (0..s)
        .into_par_iter()
        .map(|i| {
            let e = input.sample(xi[(i, 0)]);
            solver(e).map_err(|source| Error::SampleFailed {
                index: i,
                xi: xi.row(i).iter().cloned().collect(),
                source: Box::new(source),
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(s);
    for r in results {
        rows.push(r?);
    }
    let n = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("solver returned responses of differing length".into()));
    }
    let responses = DMatrix::from_fn(s, n, |i, j| rows[i][j]);
    Ok(SampleSet { xi, responses, seed })
}

/// Default regression sample count 2(P + 1).
pub fn default_sample_count(basis: &MultiIndexSet) -> usize {
    2 * basis.len()
}

/// Non-intrusive prior propagation: seeded germ draws, one FE solve per draw,
/// least-squares fit of the expansion.
pub fn propagate_prior<F>(solver: F, input: &LognormalInput, basis: &MultiIndexSet, samples: usize, seed: u64) -> Result<PCExpansion>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    let xi = draw_germs(samples, basis.m, seed);
    let set = sample_responses(solver, input, xi, Some(seed))?;
    pc_regression(&set, basis)
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a − F_b|.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}
