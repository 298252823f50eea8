//! Config-driven scenarios: homogeneous and inhomogeneous bars, plate-with-hole
//! model selection and stress inference.

pub mod checks;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod runners;

pub use checks::{gradient_points, run_gradcheck, GradientCheck};
pub use config::{BarGeometry, PlateGeometry, Scenario, ScenarioConfig, ScenarioKind};
pub use pipeline::{condition, stage_seed, Inference, Setup, Stage};
pub use report::{
    emit_report, manifest_entry, verify_manifest, write_manifest, Artifact, ArtifactContent, EstimateRecord,
    Manifest, ManifestEntry, ScenarioReport, Table, Verification, MANIFEST_NAME,
};
pub use runners::{
    relative_error, run_bar_homogeneous, run_bar_inhomogeneous, run_plate_selection, run_scenario,
    run_stress_inference, sensor_moments,
};
