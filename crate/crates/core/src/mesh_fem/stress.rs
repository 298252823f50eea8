use serde::{Deserialize, Serialize};

use super::material::{MaterialModel, MaterialParams};
use super::mesh::Mesh;
use super::solve::{external_force, point_state, point_stress, DisplacementField};
use crate::error::{Error, Result};

/// Nodal stresses, node-major. Components: 1D `[xx]`; LE `[xx, yy, xy]` (Cauchy);
/// SV `[xx, yy, xy, yx]` (first Piola-Kirchhoff, P_xy = ∂/∂Y row x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressField {
    pub model: MaterialModel,
    pub dim: usize,
    pub n_components: usize,
    pub values: Vec<f64>,
}

impl StressField {
    pub fn component_names(&self) -> &'static [&'static str] {
        match (self.dim, self.n_components) {
            (1, _) => &["xx"],
            (_, 3) => &["xx", "yy", "xy"],
            _ => &["xx", "yy", "xy", "yx"],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() / self.n_components
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.n_components..(node + 1) * self.n_components]
    }

    /// Full 2×2 tensor at a node (row i, column J).
    pub fn tensor(&self, node: usize) -> [[f64; 2]; 2] {
        let v = self.node(node);
        match (self.dim, self.n_components) {
            (1, _) => [[v[0], 0.0], [0.0, 0.0]],
            (_, 3) => [[v[0], v[2]], [v[2], v[1]]],
            _ => [[v[0], v[2]], [v[3], v[1]]],
        }
    }

    fn pack(dim: usize, model: MaterialModel, t: &[[f64; 2]; 2]) -> Vec<f64> {
        match (dim, model) {
            (1, _) => vec![t[0][0]],
            (_, MaterialModel::LinearElastic) => vec![t[0][0], t[1][1], 0.5 * (t[0][1] + t[1][0])],
            _ => vec![t[0][0], t[1][1], t[0][1], t[1][0]],
        }
    }
}

/// Gauss-point stresses extrapolated to element corners with the inverse of the
/// Gauss-point interpolant, then averaged over the elements sharing each node.
pub fn recover_stress(mesh: &Mesh, u: &DisplacementField, mat: &MaterialParams) -> Result<StressField> {
    if u.values.len() != mesh.n_dof() {
        return Err(Error::InvalidInput(format!(
            "displacement has {} entries, mesh has {} DOFs",
            u.values.len(),
            mesh.n_dof()
        )));
    }
    let dim = mesh.dim;
    let nc = match (dim, mat.model) {
        (1, _) => 1,
        (_, MaterialModel::LinearElastic) => 3,
        _ => 4,
    };
    let mut sum = vec![0.0; mesh.n_nodes() * nc];
    let mut count = vec![0usize; mesh.n_nodes()];
    let quad = mesh.quadrature();
    let corners = mesh.corner_coords();
    let scale = 3f64.sqrt();
    for e in 0..mesh.n_elements() {
        let gauss: Vec<Vec<f64>> = quad
            .iter()
            .map(|&(xi, w)| {
                let ps = point_state(mesh, e, xi, w, &u.values);
                let (p, _) = point_stress(dim, &ps.f, mat);
                StressField::pack(dim, mat.model, &p)
            })
            .collect();
        for (a, &node) in mesh.elements[e].iter().enumerate() {
            // corner in the coordinate system where Gauss points sit at ±1
            let c = corners[a];
            let w = mesh.shape_values([c[0] * scale, c[1] * scale]);
            for (g, gv) in gauss.iter().enumerate() {
                for k in 0..nc {
                    sum[node * nc + k] += w[g] * gv[k];
                }
            }
            count[node] += 1;
        }
    }
    for (node, &c) in count.iter().enumerate() {
        if c > 0 {
            for k in 0..nc {
                sum[node * nc + k] /= c as f64;
            }
        }
    }
    Ok(StressField {
        model: mat.model,
        dim,
        n_components: nc,
        values: sum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    /// On a boundary edge carrying a traction.
    Traction,
    /// Has at least one prescribed displacement component.
    Dirichlet,
    /// On the boundary, traction-free and unconstrained.
    FreeBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResidual {
    /// Weak-form residual per node, node-major then component.
    pub values: Vec<f64>,
    pub kinds: Vec<NodeKind>,
    /// L2 norm over interior nodes.
    pub interior_norm: f64,
    /// L2 norm over every DOF without a prescribed displacement.
    pub free_norm: f64,
}

pub fn node_kinds(mesh: &Mesh) -> Vec<NodeKind> {
    let mut kinds = vec![NodeKind::Interior; mesh.n_nodes()];
    let mut on_boundary = vec![false; mesh.n_nodes()];
    for (e, edge) in mesh.boundary_edges() {
        for a in mesh.edge_local_nodes(edge) {
            on_boundary[mesh.elements[e][a]] = true;
        }
    }
    for (n, &b) in on_boundary.iter().enumerate() {
        if b {
            kinds[n] = NodeKind::FreeBoundary;
        }
    }
    for bc in &mesh.neumann {
        for a in mesh.edge_local_nodes(bc.edge) {
            kinds[mesh.elements[bc.element][a]] = NodeKind::Traction;
        }
    }
    for bc in &mesh.dirichlet {
        kinds[bc.node] = NodeKind::Dirichlet;
    }
    kinds
}

/// Discrete balance-of-momentum residual of a nodal stress field:
/// r_a = Σ_e ∫ (Σ_b N_b P_b) · ∇N_a dV − f_ext,a (body force included in f_ext).
pub fn equilibrium_residual(mesh: &Mesh, stress: &StressField) -> Result<EquilibriumResidual> {
    if stress.n_nodes() != mesh.n_nodes() || stress.dim != mesh.dim {
        return Err(Error::InvalidInput(format!(
            "stress field has {} nodes in {}D, mesh has {} in {}D",
            stress.n_nodes(),
            stress.dim,
            mesh.n_nodes(),
            mesh.dim
        )));
    }
    let dim = mesh.dim;
    let mut r: Vec<f64> = external_force(mesh).iter().map(|v| -v).collect();
    let zero = vec![0.0; mesh.n_dof()];
    for e in 0..mesh.n_elements() {
        let conn = &mesh.elements[e];
        let nodal: Vec<[[f64; 2]; 2]> = conn.iter().map(|&n| stress.tensor(n)).collect();
        for (xi, w) in mesh.quadrature() {
            let ps = point_state(mesh, e, xi, w, &zero);
            let mut p = [[0.0; 2]; 2];
            for (b, t) in nodal.iter().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        p[i][j] += ps.n[b] * t[i][j];
                    }
                }
            }
            for (a, &node) in conn.iter().enumerate() {
                for i in 0..dim {
                    let mut v = 0.0;
                    for j in 0..dim {
                        v += p[i][j] * ps.grad[a][j];
                    }
                    r[node * dim + i] += v * ps.weight;
                }
            }
        }
    }
    let kinds = node_kinds(mesh);
    let mut fixed = vec![false; mesh.n_dof()];
    for bc in &mesh.dirichlet {
        fixed[bc.node * dim + bc.component] = true;
    }
    let mut interior = 0.0;
    let mut free = 0.0;
    for (k, &v) in r.iter().enumerate() {
        if kinds[k / dim] == NodeKind::Interior {
            interior += v * v;
        }
        if !fixed[k] {
            free += v * v;
        }
    }
    Ok(EquilibriumResidual {
        values: r,
        kinds,
        interior_norm: interior.sqrt(),
        free_norm: free.sqrt(),
    })
}
