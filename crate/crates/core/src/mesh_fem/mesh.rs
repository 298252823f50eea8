use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prescribed displacement of one nodal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletBc {
    pub node: usize,
    pub component: usize,
    pub value: f64,
}

/// Nominal (reference-configuration) traction on one element edge.
///
/// In 1D an "edge" is an element end point: edge 0 is the first node, edge 1 the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannBc {
    pub element: usize,
    pub edge: usize,
    pub traction: [f64; 2],
}

/// Finite element mesh: 2-node bars in 1D, 4-node bilinear quadrilaterals in 2D.
///
/// Coordinates live in the reference configuration. In 1D the second coordinate is
/// ignored. `section` is the cross-section area of a bar or the out-of-plane thickness
/// of a plane-strain slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Vec<usize>>,
    pub dirichlet: Vec<DirichletBc>,
    pub neumann: Vec<NeumannBc>,
    pub body_force: [f64; 2],
    pub section: f64,
}

pub(crate) const GAUSS_1D: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Shape functions and their reference-coordinate gradients at one point of an element.
#[derive(Debug, Clone, Copy)]
pub struct ShapeEval {
    pub count: usize,
    pub n: [f64; 4],
    pub grad: [[f64; 2]; 4],
    pub det_j: f64,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_dof(&self) -> usize {
        self.nodes.len() * self.dim
    }

    pub fn nodes_per_element(&self) -> usize {
        if self.dim == 1 {
            2
        } else {
            4
        }
    }

    pub fn edges_per_element(&self) -> usize {
        self.nodes_per_element()
    }

    /// Local node indices of an element edge.
    pub fn edge_local_nodes(&self, edge: usize) -> Vec<usize> {
        if self.dim == 1 {
            vec![edge]
        } else {
            vec![edge, (edge + 1) % 4]
        }
    }

    pub fn element_dofs(&self, element: usize) -> Vec<usize> {
        self.elements[element]
            .iter()
            .flat_map(|&n| (0..self.dim).map(move |c| n * self.dim + c))
            .collect()
    }

    /// Gauss points (natural coordinates, weight) of the element rule.
    pub fn quadrature(&self) -> Vec<([f64; 2], f64)> {
        if self.dim == 1 {
            GAUSS_1D.iter().map(|&g| ([g, 0.0], 1.0)).collect()
        } else {
            // counter-clockwise, matching the corner numbering
            [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                .iter()
                .map(|&(a, b)| ([a * GAUSS_1D[1], b * GAUSS_1D[1]], 1.0))
                .collect()
        }
    }

    /// Natural coordinates of the element corners.
    pub fn corner_coords(&self) -> Vec<[f64; 2]> {
        if self.dim == 1 {
            vec![[-1.0, 0.0], [1.0, 0.0]]
        } else {
            vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
        }
    }

    /// Shape function values only (no geometry).
    pub fn shape_values(&self, xi: [f64; 2]) -> [f64; 4] {
        if self.dim == 1 {
            [0.5 * (1.0 - xi[0]), 0.5 * (1.0 + xi[0]), 0.0, 0.0]
        } else {
            let (s, t) = (xi[0], xi[1]);
            [
                0.25 * (1.0 - s) * (1.0 - t),
                0.25 * (1.0 + s) * (1.0 - t),
                0.25 * (1.0 + s) * (1.0 + t),
                0.25 * (1.0 - s) * (1.0 + t),
            ]
        }
    }

    /// Evaluates shape functions, reference gradients ∂N/∂X and det J at `xi`.
    pub fn shape(&self, element: usize, xi: [f64; 2]) -> ShapeEval {
        let conn = &self.elements[element];
        let n = self.shape_values(xi);
        if self.dim == 1 {
            let x0 = self.nodes[conn[0]][0];
            let x1 = self.nodes[conn[1]][0];
            let det_j = 0.5 * (x1 - x0);
            let g = 1.0 / (x1 - x0);
            return ShapeEval {
                count: 2,
                n,
                grad: [[-g, 0.0], [g, 0.0], [0.0; 2], [0.0; 2]],
                det_j,
            };
        }
        let (s, t) = (xi[0], xi[1]);
        let dn_ds = [-0.25 * (1.0 - t), 0.25 * (1.0 - t), 0.25 * (1.0 + t), -0.25 * (1.0 + t)];
        let dn_dt = [-0.25 * (1.0 - s), -0.25 * (1.0 + s), 0.25 * (1.0 + s), 0.25 * (1.0 - s)];
        let mut j = [[0.0; 2]; 2];
        for a in 0..4 {
            let x = self.nodes[conn[a]];
            j[0][0] += dn_ds[a] * x[0];
            j[0][1] += dn_ds[a] * x[1];
            j[1][0] += dn_dt[a] * x[0];
            j[1][1] += dn_dt[a] * x[1];
        }
        let det_j = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv = [[j[1][1] / det_j, -j[0][1] / det_j], [-j[1][0] / det_j, j[0][0] / det_j]];
        let mut grad = [[0.0; 2]; 4];
        for a in 0..4 {
            grad[a][0] = inv[0][0] * dn_ds[a] + inv[0][1] * dn_dt[a];
            grad[a][1] = inv[1][0] * dn_ds[a] + inv[1][1] * dn_dt[a];
        }
        ShapeEval {
            count: 4,
            n,
            grad,
            det_j,
        }
    }

    /// Physical position of a natural coordinate in an element.
    pub fn map_point(&self, element: usize, xi: [f64; 2]) -> [f64; 2] {
        let n = self.shape_values(xi);
        let mut p = [0.0; 2];
        for (a, &node) in self.elements[element].iter().enumerate() {
            p[0] += n[a] * self.nodes[node][0];
            p[1] += n[a] * self.nodes[node][1];
        }
        p
    }

    /// Length of the diagonal of the axis-aligned bounding box.
    pub fn bounding_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (0..self.dim).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// Half bandwidth of the assembled DOF matrix.
    pub fn dof_bandwidth(&self) -> usize {
        self.elements
            .iter()
            .map(|conn| {
                let lo = conn.iter().min().copied().unwrap_or(0);
                let hi = conn.iter().max().copied().unwrap_or(0);
                (hi - lo) * self.dim + self.dim - 1
            })
            .max()
            .unwrap_or(0)
    }

    /// Checks connectivity, element validity and boundary-set consistency.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidMesh(format!("unsupported dimension {}", self.dim)));
        }
        if self.nodes.is_empty() || self.elements.is_empty() {
            return Err(Error::InvalidMesh("mesh has no nodes or no elements".into()));
        }
        if !(self.section > 0.0 && self.section.is_finite()) {
            return Err(Error::InvalidMesh(format!("section must be positive, got {}", self.section)));
        }
        if self.nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh("non-finite node coordinate".into()));
        }
        let nn = self.nodes_per_element();
        for (e, conn) in self.elements.iter().enumerate() {
            if conn.len() != nn {
                return Err(Error::InvalidMesh(format!(
                    "element {e} has {} nodes, expected {nn}",
                    conn.len()
                )));
            }
            if let Some(&bad) = conn.iter().find(|&&n| n >= self.nodes.len()) {
                return Err(Error::InvalidMesh(format!("element {e} references missing node {bad}")));
            }
            for a in 0..nn {
                if conn[a + 1..].contains(&conn[a]) {
                    return Err(Error::InvalidMesh(format!("element {e} repeats node {}", conn[a])));
                }
            }
            for (xi, _) in self.quadrature() {
                let det = self.shape(e, xi).det_j;
                if !(det > 0.0) {
                    return Err(Error::DegenerateElement { element: e, det });
                }
            }
        }
        let mut prescribed = std::collections::HashMap::new();
        for bc in &self.dirichlet {
            if bc.node >= self.nodes.len() || bc.component >= self.dim || !bc.value.is_finite() {
                return Err(Error::InvalidMesh(format!("invalid Dirichlet record {bc:?}")));
            }
            if let Some(prev) = prescribed.insert((bc.node, bc.component), bc.value) {
                if prev != bc.value {
                    return Err(Error::InvalidMesh(format!(
                        "node {} component {} prescribed twice with different values",
                        bc.node, bc.component
                    )));
                }
            }
        }
        for bc in &self.neumann {
            if bc.element >= self.elements.len()
                || bc.edge >= self.edges_per_element()
                || bc.traction.iter().any(|v| !v.is_finite())
            {
                return Err(Error::InvalidMesh(format!("invalid Neumann record {bc:?}")));
            }
            // the traction edge may touch the Dirichlet boundary at an end point,
            // but no component may be prescribed along the whole edge
            let conn = &self.elements[bc.element];
            let local = self.edge_local_nodes(bc.edge);
            let overlaps = (0..self.dim)
                .any(|c| local.iter().all(|&a| prescribed.contains_key(&(conn[a], c))));
            if overlaps {
                return Err(Error::InvalidMesh(format!(
                    "edge {} of element {} is both a Dirichlet and a Neumann boundary",
                    bc.edge, bc.element
                )));
            }
        }
        Ok(())
    }

    /// Edges belonging to exactly one element, as (element, edge).
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count = std::collections::HashMap::new();
        for (e, conn) in self.elements.iter().enumerate() {
            for k in 0..self.edges_per_element() {
                let mut key: Vec<usize> = self.edge_local_nodes(k).iter().map(|&a| conn[a]).collect();
                key.sort_unstable();
                count.entry(key).or_insert_with(Vec::new).push((e, k));
            }
        }
        let mut out: Vec<(usize, usize)> = count
            .into_values()
            .filter(|v| v.len() == 1)
            .map(|v| v[0])
            .collect();
        out.sort_unstable();
        out
    }

    /// Parses the line-oriented mesh format.
    ///
    /// ```text
    /// dim n_nodes n_elems
    /// id x [y]                  (n_nodes lines, ids 0..n_nodes-1)
    /// id n1 n2 [n3 n4]          (n_elems lines)
    /// dirichlet node comp value
    /// neumann elem edge tx [ty]
    /// section A                 (optional, default 1)
    /// body bx [by]              (optional, default 0)
    /// ```
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, source: &str) -> Result<Mesh> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty mesh file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad header: {e}")))?;
        if head.len() != 3 {
            return Err(err(ln, "header must be `dim n_nodes n_elems`".into()));
        }
        let (dim, n_nodes, n_elems) = (head[0], head[1], head[2]);
        if dim != 1 && dim != 2 {
            return Err(err(ln, format!("unsupported dimension {dim}")));
        }
        let float = |ln: usize, t: &str| -> Result<f64> {
            t.parse::<f64>().map_err(|e| err(ln, format!("bad number `{t}`: {e}")))
        };
        let int = |ln: usize, t: &str| -> Result<usize> {
            t.parse::<usize>().map_err(|e| err(ln, format!("bad index `{t}`: {e}")))
        };
        let mut nodes = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "unexpected end of node block".into()))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 1 + dim {
                return Err(err(ln, format!("node line needs {} fields", 1 + dim)));
            }
            if int(ln, toks[0])? != i {
                return Err(err(ln, format!("node ids must be consecutive from 0, expected {i}")));
            }
            let x = float(ln, toks[1])?;
            let y = if dim == 2 { float(ln, toks[2])? } else { 0.0 };
            nodes.push([x, y]);
        }
        let nn = if dim == 1 { 2 } else { 4 };
        let mut elements = Vec::with_capacity(n_elems);
        for i in 0..n_elems {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "unexpected end of element block".into()))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 1 + nn {
                return Err(err(ln, format!("element line needs {} fields", 1 + nn)));
            }
            if int(ln, toks[0])? != i {
                return Err(err(ln, format!("element ids must be consecutive from 0, expected {i}")));
            }
            elements.push(toks[1..].iter().map(|t| int(ln, t)).collect::<Result<Vec<_>>>()?);
        }
        let mut mesh = Mesh {
            dim,
            nodes,
            elements,
            dirichlet: Vec::new(),
            neumann: Vec::new(),
            body_force: [0.0; 2],
            section: 1.0,
        };
        for (ln, l) in lines {
            let toks: Vec<&str> = l.split_whitespace().collect();
            match toks[0] {
                "dirichlet" if toks.len() == 4 => mesh.dirichlet.push(DirichletBc {
                    node: int(ln, toks[1])?,
                    component: int(ln, toks[2])?,
                    value: float(ln, toks[3])?,
                }),
                "neumann" if toks.len() == 3 + dim => {
                    let tx = float(ln, toks[3])?;
                    let ty = if dim == 2 { float(ln, toks[4])? } else { 0.0 };
                    mesh.neumann.push(NeumannBc {
                        element: int(ln, toks[1])?,
                        edge: int(ln, toks[2])?,
                        traction: [tx, ty],
                    })
                }
                "section" if toks.len() == 2 => mesh.section = float(ln, toks[1])?,
                "body" if toks.len() == 1 + dim => {
                    mesh.body_force[0] = float(ln, toks[1])?;
                    if dim == 2 {
                        mesh.body_force[1] = float(ln, toks[2])?;
                    }
                }
                other => return Err(err(ln, format!("unrecognized record `{other}` ({} fields)", toks.len()))),
            }
        }
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn read(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mesh::parse(&text, &path.display().to_string())
    }

    /// Serializes to the text format read by [`Mesh::parse`]. Floats use the
    /// shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.dim, self.nodes.len(), self.elements.len());
        for (i, p) in self.nodes.iter().enumerate() {
            if self.dim == 1 {
                let _ = writeln!(s, "{i} {:?}", p[0]);
            } else {
                let _ = writeln!(s, "{i} {:?} {:?}", p[0], p[1]);
            }
        }
        for (i, conn) in self.elements.iter().enumerate() {
            let ids: Vec<String> = conn.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{i} {}", ids.join(" "));
        }
        for bc in &self.dirichlet {
            let _ = writeln!(s, "dirichlet {} {} {:?}", bc.node, bc.component, bc.value);
        }
        for bc in &self.neumann {
            if self.dim == 1 {
                let _ = writeln!(s, "neumann {} {} {:?}", bc.element, bc.edge, bc.traction[0]);
            } else {
                let _ = writeln!(
                    s,
                    "neumann {} {} {:?} {:?}",
                    bc.element, bc.edge, bc.traction[0], bc.traction[1]
                );
            }
        }
        if self.section != 1.0 {
            let _ = writeln!(s, "section {:?}", self.section);
        }
        if self.body_force != [0.0; 2] {
            if self.dim == 1 {
                let _ = writeln!(s, "body {:?}", self.body_force[0]);
            } else {
                let _ = writeln!(s, "body {:?} {:?}", self.body_force[0], self.body_force[1]);
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Mesh {
        Mesh {
            dim: 2,
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            elements: vec![vec![0, 1, 2, 3]],
            dirichlet: vec![
                DirichletBc { node: 0, component: 0, value: 0.0 },
                DirichletBc { node: 0, component: 1, value: 0.0 },
                DirichletBc { node: 3, component: 0, value: 0.0 },
            ],
            neumann: vec![NeumannBc { element: 0, edge: 1, traction: [1.0, 0.0] }],
            body_force: [0.0; 2],
            section: 1.0,
        }
    }

    #[test]
    fn text_round_trip() {
        let m = unit_square();
        let back = Mesh::parse(&m.to_text(), "mem").unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn clockwise_element_is_degenerate() {
        let mut m = unit_square();
        m.elements[0] = vec![0, 3, 2, 1];
        assert!(matches!(m.validate(), Err(Error::DegenerateElement { element: 0, .. })));
    }

    #[test]
    fn missing_node_reference() {
        let mut m = unit_square();
        m.elements[0][2] = 7;
        assert!(matches!(m.validate(), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn neumann_on_dirichlet_edge_rejected() {
        let mut m = unit_square();
        m.neumann[0].edge = 3; // nodes 3 and 0 are both fixed in x
        assert!(m.validate().is_err());
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "2 1 0\n0 1.0 oops\n";
        match Mesh::parse(text, "f.msh") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_functions_partition_unity() {
        let m = unit_square();
        let s = m.shape(0, [0.3, -0.2]);
        assert!((s.n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let gx: f64 = s.grad.iter().map(|g| g[0]).sum();
        assert!(gx.abs() < 1e-15);
        assert!((s.det_j - 0.25).abs() < 1e-15);
    }

    #[test]
    fn boundary_edges_of_single_quad() {
        assert_eq!(unit_square().boundary_edges().len(), 4);
    }
}
