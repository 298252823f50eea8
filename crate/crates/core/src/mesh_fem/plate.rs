use std::f64::consts::FRAC_PI_4;

use super::mesh::{DirichletBc, Mesh, NeumannBc};
use crate::error::{Error, Result};

// radial grading exponent; > 1 clusters elements towards the hole
const GRADING: f64 = 1.6;

/// Structured quarter-plate-with-hole mesh on [0, L]² minus the disc of radius R
/// at the origin.
///
/// Two blocks split along the 45° diagonal, each `4·refinement` elements along the
/// boundary and `8·refinement` radially, giving (8r + 1)² nodes. Symmetry
/// conditions u_x = 0 on X = 0 and u_y = 0 on Y = 0; traction (t_x, 0) on X = L.
pub fn make_plate_hole_mesh(radius: f64, length: f64, refinement: usize, traction: f64) -> Result<Mesh> {
    if !(radius > 0.0 && length > 0.0 && radius < 0.5 * length) || refinement == 0 || !traction.is_finite() {
        return Err(Error::InvalidInput(format!(
            "plate with hole needs 0 < R < L/2 and refinement >= 1, got R = {radius}, L = {length}, refinement = {refinement}"
        )));
    }
    let nt = 4 * refinement;
    let nr = 8 * refinement;
    let nk = 2 * nt + 1;
    let id = |j: usize, k: usize| j * nk + k;

    let mut nodes = Vec::with_capacity((nr + 1) * nk);
    for j in 0..=nr {
        let s = (j as f64 / nr as f64).powf(GRADING);
        for k in 0..nk {
            let (outer, theta) = if k <= nt {
                let t = k as f64 / nt as f64;
                ([length, length * t], FRAC_PI_4 * t)
            } else {
                let t = (k - nt) as f64 / nt as f64;
                ([length * (1.0 - t), length], FRAC_PI_4 * (1.0 + t))
            };
            let inner = [radius * theta.cos(), radius * theta.sin()];
            let mut p = [inner[0] + s * (outer[0] - inner[0]), inner[1] + s * (outer[1] - inner[1])];
            // snap symmetry lines exactly
            if k == 0 {
                p[1] = 0.0;
            }
            if k == nk - 1 {
                p[0] = 0.0;
            }
            nodes.push(p);
        }
    }

    let mut elements = Vec::with_capacity(nr * 2 * nt);
    let mut neumann = Vec::new();
    for j in 0..nr {
        for k in 0..2 * nt {
            if j == nr - 1 && k < nt {
                neumann.push(NeumannBc {
                    element: elements.len(),
                    edge: 1,
                    traction: [traction, 0.0],
                });
            }
            elements.push(vec![id(j, k), id(j + 1, k), id(j + 1, k + 1), id(j, k + 1)]);
        }
    }

    let mut dirichlet = Vec::new();
    for j in 0..=nr {
        dirichlet.push(DirichletBc { node: id(j, 0), component: 1, value: 0.0 });
        dirichlet.push(DirichletBc { node: id(j, nk - 1), component: 0, value: 0.0 });
    }
    dirichlet.sort_by_key(|bc| (bc.node, bc.component));

    let mesh = Mesh {
        dim: 2,
        nodes,
        elements,
        dirichlet,
        neumann,
        body_force: [0.0, 0.0],
        section: 1.0,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Node at the hole edge on the X axis, (R, 0), for every refinement.
pub const HOLE_TIP_NODE: usize = 0;

/// Every `stride`-th node, in node order; a deterministic sensor layout.
pub fn node_subsample(mesh: &Mesh, stride: usize) -> Vec<usize> {
    (0..mesh.n_nodes()).step_by(stride.max(1)).collect()
}
