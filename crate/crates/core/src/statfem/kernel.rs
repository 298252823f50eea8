use nalgebra::DMatrix;

/// Squared distances between observation rows, with +∞ between rows that observe
/// different displacement components (their kernel entry is zero).
pub fn row_distances(coords: &[[f64; 2]], components: &[usize]) -> DMatrix<f64> {
    let n = coords.len();
    assert_eq!(components.len(), n);
    DMatrix::from_fn(n, n, |i, j| {
        if components[i] != components[j] {
            f64::INFINITY
        } else {
            (coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)
        }
    })
}

/// C_d with entries σ_d² exp(−‖X − X′‖² / (2 l_d²)), block-diagonal over components.
pub fn kernel_from_distances(d2: &DMatrix<f64>, sigma_d: f64, l_d: f64) -> DMatrix<f64> {
    let s2 = sigma_d * sigma_d;
    let inv = 1.0 / (2.0 * l_d * l_d);
    d2.map(|r2| if r2.is_finite() { s2 * (-r2 * inv).exp() } else { 0.0 })
}

/// Kernel matrix over observation rows; see [`row_distances`] for the layout.
pub fn kernel_matrix(coords: &[[f64; 2]], components: &[usize], sigma_d: f64, l_d: f64) -> DMatrix<f64> {
    kernel_from_distances(&row_distances(coords, components), sigma_d, l_d)
}

/// (∂C/∂ln σ_d, ∂C/∂ln l_d) = (2C, C ⊙ D² e^{−2 ln l_d}).
pub fn log_kernel_derivatives_from(d2: &DMatrix<f64>, c: &DMatrix<f64>, ln_l_d: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let scale = (-2.0 * ln_l_d).exp();
    let dl = c.zip_map(d2, |cv, r2| if r2.is_finite() { cv * r2 * scale } else { 0.0 });
    (c * 2.0, dl)
}

pub fn log_kernel_derivatives(
    coords: &[[f64; 2]],
    components: &[usize],
    ln_sigma_d: f64,
    ln_l_d: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d2 = row_distances(coords, components);
    let c = kernel_from_distances(&d2, ln_sigma_d.exp(), ln_l_d.exp());
    log_kernel_derivatives_from(&d2, &c, ln_l_d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let l: f64 = 2.0;
        let coords = [[0.0, 0.0], [l * 2f64.sqrt(), 0.0]];
        let c = kernel_matrix(&coords, &[0, 0], 0.9, l);
        assert!((c[(0, 0)] - 0.81).abs() < 1e-15);
        assert!((c[(0, 1)] - 0.81 * (-1f64).exp()).abs() < 1e-15);
        let c = kernel_matrix(&coords, &[0, 1], 0.9, l);
        assert_eq!(c[(0, 1)], 0.0);
    }

    #[test]
    fn elementwise_oracle() {
        let coords = [[0.0, 0.0], [1.5, 0.0], [4.0, 0.0]];
        let c = kernel_matrix(&coords, &[0, 0, 0], 0.9, 2.0);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = coords[i][0] - coords[j][0];
                let expect = 0.9f64.powi(2) * (-(r * r) / (2.0 * 4.0)).exp();
                assert!((c[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let coords = [[0.0, 0.3], [1.1, -0.4], [2.5, 1.0], [0.2, 0.2]];
        let comps = [0, 0, 1, 1];
        let (ls, ll) = (0.2f64.ln(), 0.7f64.ln());
        let (ds, dl) = log_kernel_derivatives(&coords, &comps, ls, ll);
        let h = 1e-5;
        let k = |a: f64, b: f64| kernel_matrix(&coords, &comps, a.exp(), b.exp());
        let fs = (k(ls + h, ll) - k(ls - h, ll)) / (2.0 * h);
        let fl = (k(ls, ll + h) - k(ls, ll - h)) / (2.0 * h);
        for (a, b) in [(&ds, &fs), (&dl, &fl)] {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-7 * x.abs().max(1e-3 * a.max()), "{x} vs {y}");
            }
        }
        // zero distance entries have no length-scale sensitivity
        assert_eq!(dl[(0, 0)], 0.0);
        assert!((ds[(0, 0)] - 2.0 * 0.04).abs() < 1e-15);
        let (z1, z2) = log_kernel_derivatives(&coords, &comps, f64::NEG_INFINITY, ll);
        assert!(z1.iter().chain(z2.iter()).all(|&v| v == 0.0));
    }
}
