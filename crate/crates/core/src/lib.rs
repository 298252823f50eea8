//! Statistical finite element toolkit: polynomial-chaos priors from FE solves,
//! conditioned on sensor data through a Gaussian-process discrepancy model.

pub mod chaos;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mesh_fem;
pub mod statfem;

pub use error::{Error, Result};
