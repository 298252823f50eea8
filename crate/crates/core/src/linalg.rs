//! Linear-algebra helpers shared by the FE and statistics layers.
//!
//! FE systems use a banded symmetric store factored with LDLᵀ (no pivoting), which
//! also handles the symmetric but possibly indefinite St. Venant Kirchhoff tangent.
//! Dense covariance work goes through nalgebra with a fixed jitter policy.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band, row by row.
#[derive(Debug, Clone)]
pub struct BandedSymmetric {
    n: usize,
    bandwidth: usize,
    // row i holds columns i-bandwidth..=i, diagonal last
    data: Vec<f64>,
}

impl BandedSymmetric {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let off = r - c;
        (off <= self.bandwidth).then(|| r * (self.bandwidth + 1) + (self.bandwidth - off))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to entry (i, j). Only the lower triangle is stored, so callers
    /// assembling a full symmetric element matrix should add each pair once.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bandwidth));
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if let Some(s) = self.slot(i, j) {
            self.data[s] = v;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..i {
                let a = self.get(i, j);
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.get(i, i) * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Eliminates row and column `dof` for a prescribed value: the RHS is corrected
    /// with the removed column, the row is replaced by the identity.
    pub fn eliminate(&mut self, dof: usize, value: f64, rhs: &mut [f64]) {
        let lo = dof.saturating_sub(self.bandwidth);
        let hi = (dof + self.bandwidth).min(self.n - 1);
        for k in lo..=hi {
            if k != dof {
                let a = self.get(k, dof);
                rhs[k] -= a * value;
                self.set(k, dof, 0.0);
            }
        }
        self.set(dof, dof, 1.0);
        rhs[dof] = value;
    }

    /// In-place LDLᵀ factorization.
    pub fn factor(mut self) -> Result<BandedLdl> {
        let b = self.bandwidth;
        let w = b + 1;
        let scale = (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            for j in lo..i {
                let jlo = j.saturating_sub(b).max(lo);
                let mut s = self.data[i * w + (b - (i - j))];
                for k in jlo..j {
                    s -= self.data[i * w + (b - (i - k))] * d[k] * self.data[j * w + (b - (j - k))];
                }
                self.data[i * w + (b - (i - j))] = s / d[j];
            }
            let mut s = self.data[i * w + b];
            for k in lo..i {
                let l = self.data[i * w + (b - (i - k))];
                s -= l * l * d[k];
            }
            if !s.is_finite() || s.abs() <= 1e-14 * scale {
                return Err(Error::Singular(format!(
                    "zero pivot {s:.3e} at equation {i} (matrix scale {scale:.3e})"
                )));
            }
            d[i] = s;
        }
        Ok(BandedLdl { lower: self, diag: d })
    }
}

/// Factored banded matrix.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    lower: BandedSymmetric,
    diag: Vec<f64>,
}

impl BandedLdl {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lower.n;
        let b = self.lower.bandwidth;
        let w = b + 1;
        let data = &self.lower.data;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let mut s = x[i];
            for k in lo..i {
                s -= data[i * w + (b - (i - k))] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let hi = (i + b).min(n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= data[k * w + (b - (k - i))] * x[k];
            }
            x[i] = s;
        }
        x
    }

    /// Number of negative pivots (the inertia index of the factored matrix).
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }
}

/// Base jitter relative to the mean diagonal, and the ceiling before giving up.
pub const JITTER_START: f64 = 1e-12;
pub const JITTER_MAX: f64 = 1e-6;

// Pivots below this fraction of the largest diagonal are treated as numerically zero.
const PIVOT_FLOOR: f64 = 1e-15;

/// Cholesky factor together with the diagonal shift that was needed to obtain it.
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

fn checked_cholesky(a: DMatrix<f64>, max_diag: f64) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(a)?;
    let floor = PIVOT_FLOOR * max_diag;
    chol.l_dirty()
        .diagonal()
        .iter()
        .all(|l| l * l > floor && l.is_finite())
        .then_some(chol)
}

/// Cholesky with the shared jitter policy: an unshifted attempt first, then
/// `1e-12 · mean(diag)` escalated by ×10 up to `1e-6 · mean(diag)`.
pub fn robust_cholesky(a: &DMatrix<f64>, what: &str) -> Result<Factor> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::InvalidInput(format!("{what}: empty matrix")));
    }
    let diag = a.diagonal();
    let max_diag = diag.iter().cloned().fold(0.0_f64, f64::max);
    let mean_diag = diag.iter().sum::<f64>() / n as f64;
    if let Some(chol) = checked_cholesky(a.clone(), max_diag) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * base;
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = checked_cholesky(shifted, max_diag + jitter) {
            log::debug!("{what}: Cholesky needed jitter {jitter:.3e}");
            return Ok(Factor { chol, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        what: what.to_string(),
        jitter: JITTER_MAX * base,
        min_eigenvalue: min_eigenvalue(a),
    })
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = symmetrized(a);
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Whether the symmetric part of `a` has minimum eigenvalue ≥ −tol, tested by a
/// Cholesky factorization of sym(a) + tol·I (no eigendecomposition).
pub fn psd_within(a: &DMatrix<f64>, tol: f64) -> bool {
    let mut m = symmetrized(a);
    for i in 0..m.nrows() {
        m[(i, i)] += tol;
    }
    m.cholesky().is_some()
}

pub fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Sum of the elementwise product, i.e. tr(A Bᵀ).
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(n: usize) -> BandedSymmetric {
        let mut m = BandedSymmetric::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
        }
        m
    }

    #[test]
    fn banded_solve_matches_dense() {
        let n = 12;
        let mut m = BandedSymmetric::zeros(n, 3);
        for i in 0..n {
            m.add(i, i, 10.0 + i as f64);
            for off in 1..=3 {
                if i >= off {
                    m.add(i, i - off, 1.0 / (off as f64 + i as f64 * 0.1));
                }
            }
        }
        let dense = m.to_dense();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = m.factor().unwrap().solve(&rhs);
        let expect = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_handles_indefinite() {
        let mut m = tridiagonal(4);
        m.set(2, 2, -3.0);
        let dense = m.to_dense();
        let f = m.factor().unwrap();
        assert_eq!(f.negative_pivots(), 1);
        let rhs = vec![1.0, 2.0, 3.0, 4.0];
        let x = f.solve(&rhs);
        let r = &dense * DVector::from_vec(x) - DVector::from_vec(rhs);
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn banded_zero_pivot_is_singular() {
        let mut m = BandedSymmetric::zeros(3, 1);
        m.add(0, 0, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(2, 2, 1.0);
        assert!(matches!(m.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn elimination_keeps_symmetry_and_prescribes_value() {
        let mut m = tridiagonal(5);
        let mut rhs = vec![0.0; 5];
        m.eliminate(0, 0.5, &mut rhs);
        let d = m.to_dense();
        assert_eq!(d, d.transpose());
        let x = m.factor().unwrap().solve(&rhs);
        assert!((x[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jitter_rescues_rank_deficient_psd() {
        let v = DVector::from_fn(30, |i, _| (i as f64 + 1.0).sqrt());
        let a = &v * v.transpose();
        let f = robust_cholesky(&a, "rank one").unwrap();
        assert!(f.jitter > 0.0);
        assert!(f.jitter <= JITTER_MAX * a.diagonal().mean());
    }

    #[test]
    fn indefinite_matrix_fails_with_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match robust_cholesky(&a, "test") {
            Err(Error::NotPositiveDefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            _ => panic!("expected failure"),
        }
    }

    #[test]
    fn psd_test_matches_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1e-3]);
        assert!(!psd_within(&a, 1e-4));
        assert!(psd_within(&a, 1e-2));
    }
}
