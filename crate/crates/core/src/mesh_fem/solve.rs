use serde::{Deserialize, Serialize};

use super::material::{ConstitutiveMatrix, MaterialModel, MaterialParams};
use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::linalg::BandedSymmetric;

/// Nodal displacement vector, node-major then component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl DisplacementField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            dim: mesh.dim,
            values: vec![0.0; mesh.n_dof()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_dof() {
            return Err(Error::InvalidInput(format!(
                "displacement has {} entries, mesh has {} DOFs",
                values.len(),
                mesh.n_dof()
            )));
        }
        Ok(Self {
            dim: mesh.dim,
            values,
        })
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub load_steps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 25,
            load_steps: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    /// Residual evaluations summed over all load steps.
    pub iterations: usize,
    pub residual: f64,
}

/// Kinematics at one quadrature point: reference gradients and the deformation gradient.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointState {
    pub n: [f64; 4],
    pub grad: [[f64; 2]; 4],
    pub weight: f64,
    /// F_iJ = δ_iJ + ∂u_i/∂X_J (only [0][0] meaningful in 1D)
    pub f: [[f64; 2]; 2],
}

pub(crate) fn point_state(mesh: &Mesh, element: usize, xi: [f64; 2], w: f64, u: &[f64]) -> PointState {
    let sh = mesh.shape(element, xi);
    let dim = mesh.dim;
    let mut f = [[1.0, 0.0], [0.0, 1.0]];
    for (a, &node) in mesh.elements[element].iter().enumerate() {
        for i in 0..dim {
            let ua = u[node * dim + i];
            for j in 0..dim {
                f[i][j] += ua * sh.grad[a][j];
            }
        }
    }
    PointState {
        n: sh.n,
        grad: sh.grad,
        weight: w * sh.det_j * mesh.section,
        f,
    }
}

/// Stress measure at a quadrature point as a full 2×2 tensor: Cauchy σ for LE,
/// first Piola-Kirchhoff P = F S for SV. Also returns S (equal to σ for LE).
pub(crate) fn point_stress(dim: usize, f: &[[f64; 2]; 2], mat: &MaterialParams) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    if dim == 1 {
        let g = f[0][0] - 1.0;
        let e = mat.youngs_modulus;
        return match mat.model {
            MaterialModel::LinearElastic => {
                let s = e * g;
                ([[s, 0.0], [0.0, 0.0]], [[s, 0.0], [0.0, 0.0]])
            }
            MaterialModel::StVenantKirchhoff => {
                let s = e * (g + 0.5 * g * g);
                ([[f[0][0] * s, 0.0], [0.0, 0.0]], [[s, 0.0], [0.0, 0.0]])
            }
        };
    }
    let d = mat.plane_strain();
    match mat.model {
        MaterialModel::LinearElastic => {
            let eps = [f[0][0] - 1.0, f[1][1] - 1.0, f[0][1] + f[1][0]];
            let s = d.apply(eps);
            let t = [[s[0], s[2]], [s[2], s[1]]];
            (t, t)
        }
        MaterialModel::StVenantKirchhoff => {
            let s = second_pk(f, &d);
            let mut p = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    p[i][j] = f[i][0] * s[0][j] + f[i][1] * s[1][j];
                }
            }
            (p, s)
        }
    }
}

fn second_pk(f: &[[f64; 2]; 2], d: &ConstitutiveMatrix) -> [[f64; 2]; 2] {
    // C = FᵀF, E = (C - I)/2, Voigt strain uses 2 E12
    let c11 = f[0][0] * f[0][0] + f[1][0] * f[1][0];
    let c22 = f[0][1] * f[0][1] + f[1][1] * f[1][1];
    let c12 = f[0][0] * f[0][1] + f[1][0] * f[1][1];
    let s = d.apply([0.5 * (c11 - 1.0), 0.5 * (c22 - 1.0), c12]);
    [[s[0], s[2]], [s[2], s[1]]]
}

/// Element internal force vector and consistent tangent (local DOF order).
pub(crate) fn element_response(
    mesh: &Mesh,
    element: usize,
    mat: &MaterialParams,
    u: &[f64],
    want_tangent: bool,
) -> (Vec<f64>, Vec<f64>) {
    let dim = mesh.dim;
    let nen = mesh.nodes_per_element();
    let nd = nen * dim;
    let mut fint = vec![0.0; nd];
    let mut ke = if want_tangent { vec![0.0; nd * nd] } else { Vec::new() };
    let d = (dim == 2).then(|| mat.plane_strain().0);
    let e = mat.youngs_modulus;
    for (xi, w) in mesh.quadrature() {
        let ps = point_state(mesh, element, xi, w, u);
        let (p, s) = point_stress(dim, &ps.f, mat);
        for a in 0..nen {
            for i in 0..dim {
                let mut v = 0.0;
                for j in 0..dim {
                    v += p[i][j] * ps.grad[a][j];
                }
                fint[a * dim + i] += v * ps.weight;
            }
        }
        if !want_tangent {
            continue;
        }
        if dim == 1 {
            let (mat_t, geo) = match mat.model {
                MaterialModel::LinearElastic => (e, 0.0),
                MaterialModel::StVenantKirchhoff => (e * ps.f[0][0] * ps.f[0][0], s[0][0]),
            };
            for a in 0..2 {
                for b in 0..2 {
                    ke[a * nd + b] += (mat_t + geo) * ps.grad[a][0] * ps.grad[b][0] * ps.weight;
                }
            }
            continue;
        }
        let d = d.as_ref().expect("2D constitutive matrix");
        let f = match mat.model {
            MaterialModel::LinearElastic => [[1.0, 0.0], [0.0, 1.0]],
            MaterialModel::StVenantKirchhoff => ps.f,
        };
        // B_a (3×2): rows E11, E22, 2E12; columns displacement components
        let mut bm = [[[0.0; 2]; 3]; 4];
        for a in 0..nen {
            let g = ps.grad[a];
            for i in 0..2 {
                bm[a][0][i] = f[i][0] * g[0];
                bm[a][1][i] = f[i][1] * g[1];
                bm[a][2][i] = f[i][0] * g[1] + f[i][1] * g[0];
            }
        }
        let geometric = mat.model == MaterialModel::StVenantKirchhoff;
        for a in 0..nen {
            // DB_a
            let mut db = [[0.0; 2]; 3];
            for r in 0..3 {
                for i in 0..2 {
                    db[r][i] = d[(r, 0)] * bm[a][0][i] + d[(r, 1)] * bm[a][1][i] + d[(r, 2)] * bm[a][2][i];
                }
            }
            for b in 0..nen {
                let g = if geometric {
                    let (ga, gb) = (ps.grad[a], ps.grad[b]);
                    ga[0] * (s[0][0] * gb[0] + s[0][1] * gb[1]) + ga[1] * (s[1][0] * gb[0] + s[1][1] * gb[1])
                } else {
                    0.0
                };
                for i in 0..2 {
                    for k in 0..2 {
                        let mut v = 0.0;
                        for r in 0..3 {
                            v += bm[b][r][i] * db[r][k];
                        }
                        if i == k {
                            v += g;
                        }
                        ke[(b * 2 + i) * nd + a * 2 + k] += v * ps.weight;
                    }
                }
            }
        }
    }
    (fint, ke)
}

/// Consistent nodal forces from Neumann tractions and the body force.
pub fn external_force(mesh: &Mesh) -> Vec<f64> {
    let dim = mesh.dim;
    let mut f = vec![0.0; mesh.n_dof()];
    for bc in &mesh.neumann {
        let conn = &mesh.elements[bc.element];
        let local = mesh.edge_local_nodes(bc.edge);
        if dim == 1 {
            f[conn[local[0]]] += bc.traction[0] * mesh.section;
            continue;
        }
        let (p, q) = (mesh.nodes[conn[local[0]]], mesh.nodes[conn[local[1]]]);
        let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        // linear edge: each end node receives half the resultant
        for &ln in &local {
            for i in 0..2 {
                f[conn[ln] * 2 + i] += 0.5 * bc.traction[i] * len * mesh.section;
            }
        }
    }
    if mesh.body_force.iter().any(|&b| b != 0.0) {
        for e in 0..mesh.n_elements() {
            for (xi, w) in mesh.quadrature() {
                let sh = mesh.shape(e, xi);
                let wt = w * sh.det_j * mesh.section;
                for (a, &node) in mesh.elements[e].iter().enumerate() {
                    for i in 0..dim {
                        f[node * dim + i] += mesh.body_force[i] * sh.n[a] * wt;
                    }
                }
            }
        }
    }
    f
}

/// Assembled internal force vector f_int(u).
pub fn internal_force(mesh: &Mesh, mat: &MaterialParams, u: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; mesh.n_dof()];
    for e in 0..mesh.n_elements() {
        let (fe, _) = element_response(mesh, e, mat, u, false);
        for (k, &g) in mesh.element_dofs(e).iter().enumerate() {
            f[g] += fe[k];
        }
    }
    f
}

/// Assembled tangent stiffness (the linear stiffness K for LE) and internal force.
pub fn assemble_tangent(mesh: &Mesh, mat: &MaterialParams, u: &[f64]) -> (BandedSymmetric, Vec<f64>) {
    let mut k = BandedSymmetric::zeros(mesh.n_dof(), mesh.dof_bandwidth());
    let mut f = vec![0.0; mesh.n_dof()];
    for e in 0..mesh.n_elements() {
        let (fe, ke) = element_response(mesh, e, mat, u, true);
        let dofs = mesh.element_dofs(e);
        let nd = dofs.len();
        for (r, &gr) in dofs.iter().enumerate() {
            f[gr] += fe[r];
            for (c, &gc) in dofs.iter().enumerate() {
                if gc <= gr {
                    k.add(gr, gc, ke[r * nd + c]);
                }
            }
        }
    }
    (k, f)
}

fn dirichlet_mask(mesh: &Mesh) -> Vec<bool> {
    let mut fixed = vec![false; mesh.n_dof()];
    for bc in &mesh.dirichlet {
        fixed[bc.node * mesh.dim + bc.component] = true;
    }
    fixed
}

fn check_inputs(mesh: &Mesh, mat: &MaterialParams, model: MaterialModel) -> Result<()> {
    mat.validate()?;
    if mat.model != model {
        return Err(Error::InvalidInput(format!(
            "solver for {model} called with a {} material",
            mat.model
        )));
    }
    mesh.validate()?;
    if mesh.dirichlet.is_empty() {
        return Err(Error::Singular("no Dirichlet conditions; rigid-body modes are unconstrained".into()));
    }
    Ok(())
}

/// Linear elastic solve K u = f with Dirichlet rows eliminated.
pub fn solve_linear_elastic(mesh: &Mesh, mat: &MaterialParams) -> Result<DisplacementField> {
    check_inputs(mesh, mat, MaterialModel::LinearElastic)?;
    let u0 = vec![0.0; mesh.n_dof()];
    let (mut k, _) = assemble_tangent(mesh, mat, &u0);
    let mut rhs = external_force(mesh);
    for bc in &mesh.dirichlet {
        k.eliminate(bc.node * mesh.dim + bc.component, bc.value, &mut rhs);
    }
    let ldl = k.factor()?;
    let mut u = ldl.solve(&rhs);
    for bc in &mesh.dirichlet {
        u[bc.node * mesh.dim + bc.component] = bc.value;
    }
    Ok(DisplacementField {
        dim: mesh.dim,
        values: u,
    })
}

/// St. Venant Kirchhoff solve by Newton-Raphson with optional load stepping.
///
/// Convergence: ‖R_free‖₂ ≤ tol · max(‖f_ext‖₂, ‖reactions‖₂). The iteration count
/// is the number of residual evaluations, so an unloaded problem converges in 1.
pub fn solve_st_venant(mesh: &Mesh, mat: &MaterialParams, opts: &NewtonOptions) -> Result<(DisplacementField, SolveStats)> {
    check_inputs(mesh, mat, MaterialModel::StVenantKirchhoff)?;
    if opts.load_steps == 0 || opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("invalid Newton options {opts:?}")));
    }
    let fixed = dirichlet_mask(mesh);
    let f_full = external_force(mesh);
    let mut u = vec![0.0; mesh.n_dof()];
    let mut stats = SolveStats::default();
    for step in 1..=opts.load_steps {
        let lambda = step as f64 / opts.load_steps as f64;
        let f_ext: Vec<f64> = f_full.iter().map(|v| v * lambda).collect();
        let fext_norm = norm_where(&f_ext, &fixed, false);
        let mut it = 0;
        loop {
            let (mut k, fint) = assemble_tangent(mesh, mat, &u);
            it += 1;
            stats.iterations += 1;
            let mut r: Vec<f64> = f_ext.iter().zip(&fint).map(|(fe, fi)| fe - fi).collect();
            let res = norm_where(&r, &fixed, false);
            let reactions = norm_where(&fint, &fixed, true);
            let dirichlet_gap = mesh
                .dirichlet
                .iter()
                .map(|bc| (lambda * bc.value - u[bc.node * mesh.dim + bc.component]).abs())
                .fold(0.0, f64::max);
            stats.residual = res;
            if !res.is_finite() {
                return Err(Error::NewtonDivergence {
                    iterations: stats.iterations,
                    residual: res,
                });
            }
            if res <= opts.tol * fext_norm.max(reactions) && dirichlet_gap == 0.0 {
                break;
            }
            if it >= opts.max_iter {
                return Err(Error::NewtonDivergence {
                    iterations: stats.iterations,
                    residual: res,
                });
            }
            for bc in &mesh.dirichlet {
                let dof = bc.node * mesh.dim + bc.component;
                k.eliminate(dof, lambda * bc.value - u[dof], &mut r);
            }
            let du = k.factor()?.solve(&r);
            for (ui, di) in u.iter_mut().zip(&du) {
                *ui += di;
            }
            for bc in &mesh.dirichlet {
                u[bc.node * mesh.dim + bc.component] = lambda * bc.value;
            }
        }
    }
    Ok((
        DisplacementField {
            dim: mesh.dim,
            values: u,
        },
        stats,
    ))
}

/// Dispatches on `mat.model`.
pub fn solve(mesh: &Mesh, mat: &MaterialParams, opts: &NewtonOptions) -> Result<DisplacementField> {
    match mat.model {
        MaterialModel::LinearElastic => solve_linear_elastic(mesh, mat),
        MaterialModel::StVenantKirchhoff => solve_st_venant(mesh, mat, opts).map(|(u, _)| u),
    }
}

fn norm_where(v: &[f64], mask: &[bool], want: bool) -> f64 {
    v.iter()
        .zip(mask)
        .filter(|(_, &m)| m == want)
        .map(|(x, _)| x * x)
        .sum::<f64>()
        .sqrt()
}
