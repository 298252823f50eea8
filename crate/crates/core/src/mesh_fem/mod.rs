//! Deterministic finite element core: meshes, LE and St. Venant Kirchhoff solves,
//! sensor projection and stress recovery.

pub mod bar;
pub mod material;
pub mod mesh;
pub mod plate;
pub mod projection;
pub mod solve;
pub mod stress;

pub use bar::{analytic_bar, bar_mesh, BarProblem, YoungsProfile};
pub use material::{constitutive_3d, ConstitutiveMatrix, MaterialModel, MaterialParams};
pub use mesh::{DirichletBc, Mesh, NeumannBc};
pub use plate::{make_plate_hole_mesh, node_subsample, HOLE_TIP_NODE};
pub use projection::{projection_matrix, Projection};
pub use solve::{
    assemble_tangent, external_force, internal_force, solve, solve_linear_elastic, solve_st_venant,
    DisplacementField, NewtonOptions, SolveStats,
};
pub use stress::{equilibrium_residual, node_kinds, recover_stress, EquilibriumResidual, NodeKind, StressField};
