use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::error::{Error, Result};

/// Sparse interpolation operator H mapping nodal displacements to sensor readings.
///
/// Rows are sensor-major then component, the same layout as the DOF vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub dim: usize,
    pub n_dof: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Containing element and natural coordinates per sensor.
    pub locations: Vec<(usize, [f64; 2])>,
}

impl Projection {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.locations.len()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * u[j]).sum())
            .collect()
    }

    pub fn apply_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.apply(u.as_slice()))
    }

    /// H·M for a dense M with n_dof rows.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows(), m.ncols());
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                for c in 0..m.ncols() {
                    out[(r, c)] += w * m[(j, c)];
                }
            }
        }
        out
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Projection {
        Projection {
            dim: self.dim,
            n_dof: self.n_dof,
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            locations: self.locations.clone(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n_rows(), self.n_dof);
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                h[(r, j)] += w;
            }
        }
        h
    }
}

/// Natural coordinates of `p` in a quad by Newton iteration on the bilinear map.
fn invert_quad(mesh: &Mesh, element: usize, p: [f64; 2]) -> Option<[f64; 2]> {
    let mut xi = [0.0, 0.0];
    for _ in 0..50 {
        let x = mesh.map_point(element, xi);
        let r = [p[0] - x[0], p[1] - x[1]];
        let (s, t) = (xi[0], xi[1]);
        let dn_ds = [-0.25 * (1.0 - t), 0.25 * (1.0 - t), 0.25 * (1.0 + t), -0.25 * (1.0 + t)];
        let dn_dt = [-0.25 * (1.0 - s), -0.25 * (1.0 + s), 0.25 * (1.0 + s), 0.25 * (1.0 - s)];
        let mut j = [[0.0; 2]; 2];
        for (a, &node) in mesh.elements[element].iter().enumerate() {
            let c = mesh.nodes[node];
            j[0][0] += dn_ds[a] * c[0];
            j[0][1] += dn_dt[a] * c[0];
            j[1][0] += dn_ds[a] * c[1];
            j[1][1] += dn_dt[a] * c[1];
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < f64::MIN_POSITIVE {
            return None;
        }
        let d = [(j[1][1] * r[0] - j[0][1] * r[1]) / det, (-j[1][0] * r[0] + j[0][0] * r[1]) / det];
        xi[0] += d[0];
        xi[1] += d[1];
        if !xi[0].is_finite() || !xi[1].is_finite() {
            return None;
        }
        if d[0].abs().max(d[1].abs()) < 1e-14 {
            break;
        }
    }
    Some(xi)
}

/// Locates `p`: the lowest-index element whose closure contains it within `tol`.
pub fn locate(mesh: &Mesh, p: [f64; 2], tol: f64) -> Option<(usize, [f64; 2])> {
    for e in 0..mesh.n_elements() {
        let conn = &mesh.elements[e];
        if mesh.dim == 1 {
            let (x0, x1) = (mesh.nodes[conn[0]][0], mesh.nodes[conn[1]][0]);
            let (lo, hi) = (x0.min(x1), x0.max(x1));
            if p[0] >= lo - tol && p[0] <= hi + tol {
                let xi = (2.0 * (p[0] - x0) / (x1 - x0) - 1.0).clamp(-1.0, 1.0);
                return Some((e, [xi, 0.0]));
            }
            continue;
        }
        // cheap bounding-box rejection
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &n in conn {
            for k in 0..2 {
                lo[k] = lo[k].min(mesh.nodes[n][k]);
                hi[k] = hi[k].max(mesh.nodes[n][k]);
            }
        }
        if (0..2).any(|k| p[k] < lo[k] - tol || p[k] > hi[k] + tol) {
            continue;
        }
        let Some(xi) = invert_quad(mesh, e, p) else { continue };
        let clamped = [xi[0].clamp(-1.0, 1.0), xi[1].clamp(-1.0, 1.0)];
        let x = mesh.map_point(e, clamped);
        if ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt() <= tol {
            return Some((e, clamped));
        }
    }
    None
}

/// Builds H for the given sensor coordinates (tolerance 1e-8 × bounding-box diagonal).
pub fn projection_matrix(mesh: &Mesh, sensors: &[[f64; 2]]) -> Result<Projection> {
    let tol = 1e-8 * mesh.bounding_diagonal();
    let dim = mesh.dim;
    let mut rows = Vec::with_capacity(sensors.len() * dim);
    let mut locations = Vec::with_capacity(sensors.len());
    for (i, &p) in sensors.iter().enumerate() {
        let (e, xi) = locate(mesh, p, tol).ok_or_else(|| Error::SensorOutsideMesh {
            index: i,
            coords: p[..dim].to_vec(),
        })?;
        let n = mesh.shape_values(xi);
        locations.push((e, xi));
        for c in 0..dim {
            let row: Vec<(usize, f64)> = mesh.elements[e]
                .iter()
                .enumerate()
                .filter(|&(a, _)| n[a] != 0.0)
                .map(|(a, &node)| (node * dim + c, n[a]))
                .collect();
            rows.push(row);
        }
    }
    Ok(Projection {
        dim,
        n_dof: mesh.n_dof(),
        rows,
        locations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::bar::bar_mesh;

    #[test]
    fn node_and_midpoint_rows() {
        let mesh = bar_mesh(10.0, 1.0, 5, 0.0, 0.0);
        let h = projection_matrix(&mesh, &[[4.0, 0.0], [5.0, 0.0]]).unwrap();
        let d = h.to_dense();
        assert_eq!(d[(0, 2)], 1.0);
        assert!((d.row(0).sum() - 1.0).abs() < 1e-15);
        assert!((d[(1, 2)] - 0.5).abs() < 1e-15 && (d[(1, 3)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shared_node_goes_to_lowest_element() {
        let mesh = bar_mesh(10.0, 1.0, 5, 0.0, 0.0);
        let h = projection_matrix(&mesh, &[[2.0, 0.0]]).unwrap();
        assert_eq!(h.locations[0].0, 0);
    }

    #[test]
    fn outside_sensor_is_reported() {
        let mesh = bar_mesh(10.0, 1.0, 5, 0.0, 0.0);
        match projection_matrix(&mesh, &[[1.0, 0.0], [10.5, 0.0]]) {
            Err(Error::SensorOutsideMesh { index, coords }) => {
                assert_eq!(index, 1);
                assert_eq!(coords, vec![10.5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
