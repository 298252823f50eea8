//! Python bindings: meshes, forward solves, chaos priors, hyperparameter
//! estimation, conditioning and the scenario runners.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use statfem::chaos::{pc_moments, PCExpansion};
use statfem::experiments::{condition, emit_report, run_scenario, verify_manifest, ScenarioConfig, Setup};
use statfem::mesh_fem::{bar_mesh, make_plate_hole_mesh, solve, MaterialModel, MaterialParams, Mesh, NewtonOptions};
use statfem::statfem::{
    neg_log_marginal, posterior_update, true_response, Hyperparameters, ObservationSet, OptimizerOptions,
};
use statfem::Error;

fn to_py(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    match e {
        Error::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn model(tag: &str) -> PyResult<MaterialModel> {
    match tag {
        "LE" => Ok(MaterialModel::LinearElastic),
        "SV" => Ok(MaterialModel::StVenantKirchhoff),
        other => Err(PyValueError::new_err(format!("unknown material model '{other}' (expected LE or SV)"))),
    }
}

fn hyper(rho: f64, sigma_d: f64, l_d: f64) -> PyResult<Hyperparameters> {
    Hyperparameters::new(rho, sigma_d, l_d).map_err(to_py)
}

/// Finite element mesh (2-node bars or 4-node quads).
#[pyclass(name = "Mesh", module = "statfem_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: Mesh,
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Mesh::parse(text, "<string>").map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Mesh::read(&path).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Bar fixed at x = 0 with a tip load and optional uniform line load.
    #[staticmethod]
    #[pyo3(signature = (length, area, n_elements, tip_load, line_load = 0.0))]
    fn bar(length: f64, area: f64, n_elements: usize, tip_load: f64, line_load: f64) -> Self {
        Self {
            inner: bar_mesh(length, area, n_elements, tip_load, line_load),
        }
    }

    /// Quarter plate with a circular hole under uniaxial traction.
    #[staticmethod]
    fn plate_with_hole(radius: f64, length: f64, refinement: usize, traction: f64) -> PyResult<Self> {
        make_plate_hole_mesh(radius, length, refinement, traction)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_dof(&self) -> usize {
        self.inner.n_dof()
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes.iter().map(|p| (p[0], p[1])).collect()
    }

    /// Nodal displacements for a deterministic modulus.
    #[pyo3(signature = (youngs_modulus, poisson_ratio = 0.0, model_tag = "LE"))]
    fn solve(&self, youngs_modulus: f64, poisson_ratio: f64, model_tag: &str) -> PyResult<Vec<f64>> {
        let mat = MaterialParams::new(youngs_modulus, poisson_ratio, model(model_tag)?).map_err(to_py)?;
        solve(&self.inner, &mat, &NewtonOptions::default())
            .map(|u| u.values)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Mesh(dim={}, nodes={}, elements={})", self.inner.dim, self.inner.n_nodes(), self.inner.n_elements())
    }
}

/// Polynomial chaos expansion of the nodal displacement.
#[pyclass(name = "PCExpansion", module = "statfem_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyExpansion {
    inner: PCExpansion,
}

#[pymethods]
impl PyExpansion {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        PCExpansion::from_json(text, std::path::Path::new("<string>"))
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        PCExpansion::read(&path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_dof(&self) -> usize {
        self.inner.n_dof()
    }

    #[getter]
    fn n_terms(&self) -> usize {
        self.inner.basis.len()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean().as_slice().to_vec()
    }

    fn std(&self) -> Vec<f64> {
        pc_moments(&self.inner).std_dev().as_slice().to_vec()
    }

    fn evaluate(&self, xi: Vec<f64>) -> Vec<f64> {
        self.inner.evaluate(&xi).as_slice().to_vec()
    }
}

/// Repeated sensor readings with known noise level.
#[pyclass(name = "Observations", module = "statfem_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyObservations {
    inner: ObservationSet,
}

#[pymethods]
impl PyObservations {
    #[staticmethod]
    fn read_csv(path: PathBuf, sigma_e: f64) -> PyResult<Self> {
        ObservationSet::read_csv(&path, sigma_e).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn parse_csv(text: &str, sigma_e: f64) -> PyResult<Self> {
        ObservationSet::parse_csv(text, "<string>", sigma_e)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_reads(&self) -> usize {
        self.inner.n_reads()
    }

    #[getter]
    fn sigma_e(&self) -> f64 {
        self.inner.sigma_e
    }

    fn mean_reading(&self) -> Vec<f64> {
        self.inner.mean_reading().as_slice().to_vec()
    }
}

/// A resolved scenario: geometry, prior, data-generation and optimizer settings.
#[pyclass(name = "Scenario", module = "statfem_py", frozen, skip_from_py_object)]
struct PyScenario {
    inner: statfem::experiments::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg = ScenarioConfig::parse(text, std::path::Path::new("<string>")).map_err(to_py)?;
        cfg.resolve().map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let cfg = ScenarioConfig::read(&path).map_err(to_py)?;
        cfg.resolve().map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn mesh(&self) -> PyResult<PyMesh> {
        Setup::new(&self.inner).map(|s| PyMesh { inner: s.mesh }).map_err(to_py)
    }

    /// Offline stage for one material model.
    fn prior(&self, py: Python<'_>, model_tag: &str) -> PyResult<PyExpansion> {
        let m = model(model_tag)?;
        let s = &self.inner;
        py.detach(|| Setup::new(s)?.propagate(m))
            .map(|inner| PyExpansion { inner })
            .map_err(to_py)
    }

    /// Synthetic readings for the scenario's generating hyperparameters.
    fn observations(&self, py: Python<'_>) -> PyResult<PyObservations> {
        let s = &self.inner;
        py.detach(|| {
            let setup = Setup::new(s)?;
            let truth = if s.kind.is_bar() {
                setup.bar_truth()?
            } else {
                setup.plate_truth(&setup.prior(MaterialModel::StVenantKirchhoff)?)
            };
            setup.observations(&truth)
        })
        .map(|inner| PyObservations { inner })
        .map_err(to_py)
    }

    /// Runs the whole scenario; returns its scalar summary. With `out`, also
    /// writes the artifacts and manifest there.
    #[pyo3(signature = (out = None))]
    fn run(&self, py: Python<'_>, out: Option<PathBuf>) -> PyResult<BTreeMap<String, f64>> {
        let s = &self.inner;
        py.detach(|| {
            let report = run_scenario(s)?;
            if let Some(dir) = &out {
                emit_report(&report, dir)?;
            }
            Ok(report.scalars)
        })
        .map_err(to_py)
    }
}

/// Negative log marginal likelihood of the readings.
#[pyfunction]
fn marginal_nll(prior: &PyExpansion, mesh: &PyMesh, obs: &PyObservations, rho: f64, sigma_d: f64, l_d: f64) -> PyResult<f64> {
    let field = pc_moments(&prior.inner);
    let h = obs.inner.projection(&mesh.inner).map_err(to_py)?;
    neg_log_marginal(&hyper(rho, sigma_d, l_d)?, &field, &h, &obs.inner).map_err(to_py)
}

/// Online stage: hyperparameter estimation, conditioning and the true-response
/// prediction at the sensors. No FE solve happens here.
#[pyfunction]
#[pyo3(signature = (prior, mesh, obs, initial = (1.0, 1.0, 1.0), seed = 0))]
fn infer(
    py: Python<'_>,
    prior: &PyExpansion,
    mesh: &PyMesh,
    obs: &PyObservations,
    initial: (f64, f64, f64),
    seed: u64,
) -> PyResult<BTreeMap<String, Vec<f64>>> {
    let init = hyper(initial.0, initial.1, initial.2)?;
    let opts = OptimizerOptions {
        seed,
        ..Default::default()
    };
    let inf = py
        .detach(|| {
            let field = pc_moments(&prior.inner);
            let h = obs.inner.projection(&mesh.inner)?;
            condition(&field, &h, &obs.inner, &init, &opts)
        })
        .map_err(to_py)?;
    let e = &inf.estimate;
    let mut out = BTreeMap::new();
    out.insert("hyperparameters".into(), vec![e.rho, e.sigma_d, e.l_d]);
    out.insert("neg_log_marginal".into(), vec![e.neg_log_marginal]);
    out.insert("posterior_mean".into(), inf.posterior.mean.as_slice().to_vec());
    out.insert("posterior_std".into(), inf.posterior.std_dev().as_slice().to_vec());
    out.insert("response_mean".into(), inf.response.mean.as_slice().to_vec());
    out.insert("response_std".into(), inf.response.std_dev().as_slice().to_vec());
    out.insert("rmse".into(), vec![inf.rmse]);
    Ok(out)
}

/// Conditioning at fixed hyperparameters: (posterior mean, posterior std, response mean).
#[pyfunction]
fn posterior(
    prior: &PyExpansion,
    mesh: &PyMesh,
    obs: &PyObservations,
    rho: f64,
    sigma_d: f64,
    l_d: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let w = hyper(rho, sigma_d, l_d)?;
    let field = pc_moments(&prior.inner);
    let h = obs.inner.projection(&mesh.inner).map_err(to_py)?;
    let post = posterior_update(&field, &h, &obs.inner, &w).map_err(to_py)?;
    let z = true_response(&post, &h, &obs.inner, &w);
    Ok((
        post.mean.as_slice().to_vec(),
        post.std_dev().as_slice().to_vec(),
        z.mean.as_slice().to_vec(),
    ))
}

/// True when every artifact in `dir` matches its manifest hash.
#[pyfunction]
fn verify(dir: PathBuf) -> PyResult<bool> {
    verify_manifest(&dir).map(|v| v.ok()).map_err(to_py)
}

#[pymodule]
fn statfem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyExpansion>()?;
    m.add_class::<PyObservations>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(marginal_nll, m)?)?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    m.add_function(wrap_pyfunction!(posterior, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
