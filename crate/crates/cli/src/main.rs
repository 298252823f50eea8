use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use statfem::chaos::{pc_moments, PCExpansion};
use statfem::experiments::{
    condition, emit_report, run_bar_homogeneous, run_bar_inhomogeneous, run_gradcheck, run_plate_selection,
    run_scenario, run_stress_inference, verify_manifest, Scenario, ScenarioConfig, ScenarioKind, ScenarioReport,
    Setup, Table,
};
use statfem::mesh_fem::{MaterialModel, Mesh};
use statfem::statfem::ObservationSet;
use statfem::Error;

const GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "statfem", version, about = "Statistical FEM: chaos priors conditioned on sensor data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; every artifact is written below it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to STATFEM_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the scenario mesh in the text mesh format.
    Mesh,
    /// Offline stage: FE sampling and chaos regression for each model.
    Prior,
    /// Generate synthetic observations for the scenario.
    Observe,
    /// Online stage: estimate hyperparameters and condition a stored prior on observations.
    Infer {
        /// Chaos expansion written by `prior`.
        #[arg(long)]
        prior: PathBuf,
        /// Mesh the expansion was computed on.
        #[arg(long)]
        mesh: PathBuf,
        /// Observation CSV.
        #[arg(long)]
        observations: PathBuf,
    },
    /// Plate model selection by RMSE.
    Select,
    /// Plate stress inference with equilibrium residuals.
    Stress,
    /// Run whatever scenario the config describes.
    Run,
    /// Compare analytic and finite-difference gradients of the negative log marginal likelihood.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Check the artifacts in a directory against its manifest.
    Verify {
        /// Directory holding manifest.json.
        dir: PathBuf,
    },
}

enum Failure {
    Domain(Error),
    /// Ran correctly but the check did not pass.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

fn usage(msg: &str) -> Failure {
    Failure::Domain(Error::InvalidInput(msg.to_string()))
}

fn load_scenario(g: &Global) -> Result<Scenario, Failure> {
    let path = g.config.as_ref().ok_or_else(|| usage("--config is required for this command"))?;
    let cfg = ScenarioConfig::read(path)?;
    let mut s = cfg.resolve()?;
    if let Some(seed) = g.seed {
        s.seed = seed;
        s.optimizer.seed = seed;
    }
    Ok(s)
}

fn out_dir(g: &Global) -> Result<&Path, Failure> {
    g.out.as_deref().ok_or_else(|| usage("--out is required for this command"))
}

fn emit(report: &ScenarioReport, dir: &Path) -> Result<(), Failure> {
    let manifest = emit_report(report, dir)?;
    log::info!("wrote {} artifacts, manifest {}", report.artifacts.len(), manifest.display());
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_mesh(g: &Global) -> Result<(), Failure> {
    let s = load_scenario(g)?;
    let setup = Setup::new(&s)?;
    let mut r = ScenarioReport::new(&s.name);
    r.add_text("mesh.txt", setup.mesh.to_text());
    r.add_json("effective_config.json", &s);
    emit(&r, out_dir(g)?)
}

fn cmd_prior(g: &Global) -> Result<(), Failure> {
    let s = load_scenario(g)?;
    let setup = Setup::new(&s)?;
    let mut r = ScenarioReport::new(&s.name);
    let dim = setup.mesh.dim;
    for &m in &s.models {
        let pc = setup.propagate(m)?;
        let field = pc_moments(&pc);
        let sd = field.std_dev();
        let mut t = Table::new(&["node_id", "x", "y", "component", "quantity", "value"]);
        for n in 0..setup.mesh.n_nodes() {
            let [x, y] = setup.mesh.nodes[n];
            for c in 0..dim {
                for (q, v) in [("mean", field.mean[n * dim + c]), ("std", sd[n * dim + c])] {
                    t.push(vec![
                        n.to_string(),
                        format!("{x:?}"),
                        format!("{y:?}"),
                        c.to_string(),
                        q.into(),
                        format!("{v:?}"),
                    ]);
                }
            }
        }
        r.add_text(&format!("prior_{m}.json"), pc.to_json());
        r.add_csv(&format!("prior_moments_{m}.csv"), t);
    }
    r.add_text("mesh.txt", setup.mesh.to_text());
    r.add_json("effective_config.json", &s);
    emit(&r, out_dir(g)?)
}

fn cmd_observe(g: &Global) -> Result<(), Failure> {
    let s = load_scenario(g)?;
    let setup = Setup::new(&s)?;
    let truth = if s.kind.is_bar() {
        setup.bar_truth()?
    } else {
        setup.plate_truth(&setup.prior(MaterialModel::StVenantKirchhoff)?)
    };
    let obs = setup.observations(&truth)?;
    let mut r = ScenarioReport::new(&s.name);
    r.add_text("observations.csv", obs.to_csv());
    r.add_text("mesh.txt", setup.mesh.to_text());
    r.add_json("effective_config.json", &s);
    emit(&r, out_dir(g)?)
}

/// Reads stored artifacts only; no FE solve happens on this path.
fn cmd_infer(g: &Global, prior: &Path, mesh: &Path, observations: &Path) -> Result<(), Failure> {
    let s = load_scenario(g)?;
    let pc = PCExpansion::read(prior)?;
    let mesh = Mesh::read(mesh)?;
    let obs = ObservationSet::read_csv(observations, s.noise_variance.sqrt())?;
    let h = obs.projection(&mesh)?;
    let field = pc_moments(&pc);
    if field.dim() != mesh.n_dof() {
        return Err(Failure::Domain(Error::InvalidInput(format!(
            "{} has {} DOFs but {} has {}",
            prior.display(),
            field.dim(),
            mesh.n_nodes(),
            mesh.n_dof()
        ))));
    }
    let inf = condition(&field, &h, &obs, &s.initial, &s.optimizer)?;
    let mut r = ScenarioReport::new(&s.name);
    r.add_json("hyperparameters.json", &inf.estimate);
    let dim = mesh.dim;
    let sd = inf.posterior.std_dev();
    let mut t = Table::new(&["node_id", "x", "y", "component", "quantity", "value"]);
    for n in 0..mesh.n_nodes() {
        let [x, y] = mesh.nodes[n];
        for c in 0..dim {
            for (q, v) in [("mean", inf.posterior.mean[n * dim + c]), ("std", sd[n * dim + c])] {
                t.push(vec![n.to_string(), format!("{x:?}"), format!("{y:?}"), c.to_string(), q.into(), format!("{v:?}")]);
            }
        }
    }
    r.add_csv("posterior_field.csv", t);
    let zsd = inf.response.std_dev();
    let mut z = Table::new(&["sensor_id", "component", "quantity", "value"]);
    for (row, &(sensor, comp)) in obs.rows.iter().enumerate() {
        for (q, v) in [("mean", inf.response.mean[row]), ("std", zsd[row])] {
            z.push(vec![obs.sensor_ids[sensor].to_string(), comp.to_string(), q.into(), format!("{v:?}")]);
        }
    }
    r.add_csv("true_response.csv", z);
    r.set("rmse", inf.rmse);
    r.add_summary();
    emit(&r, out_dir(g)?)
}

fn cmd_scenario(g: &Global, kind: Option<ScenarioKind>) -> Result<(), Failure> {
    let s = load_scenario(g)?;
    let report = match kind {
        None => run_scenario(&s)?,
        Some(ScenarioKind::PlateSelection) => run_plate_selection(&s)?,
        Some(ScenarioKind::StressInference) => run_stress_inference(&s)?,
        Some(ScenarioKind::BarHomogeneous) => run_bar_homogeneous(&s)?,
        Some(ScenarioKind::BarInhomogeneous) => run_bar_inhomogeneous(&s)?,
    };
    if let Some(m) = report.selected_model {
        log::info!("selected model {m}");
    }
    emit(&report, out_dir(g)?)
}

fn cmd_gradcheck(g: &Global, points: usize) -> Result<(), Failure> {
    let s = load_scenario(g)?;
    let checks = run_gradcheck(&s, points)?;
    let worst = checks.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    for c in &checks {
        println!("{} max relative gradient error {:.3e}", c.model, c.max_relative_error);
    }
    println!("max relative gradient error {worst:.3e}");
    if let Some(dir) = &g.out {
        let mut r = ScenarioReport::new(&s.name);
        r.add_json("gradcheck.json", &checks);
        emit(&r, dir)?;
    }
    if worst <= GRADIENT_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "max relative gradient error {worst:.3e} exceeds {GRADIENT_TOLERANCE:e}"
        )))
    }
}

fn cmd_verify(dir: &Path) -> Result<(), Failure> {
    let v = verify_manifest(dir)?;
    println!("{}", v.describe());
    if v.ok() {
        Ok(())
    } else {
        Err(Failure::Check(v.describe()))
    }
}

fn configure_threads(g: &Global) {
    let threads = g.threads.or_else(|| std::env::var("STATFEM_THREADS").ok().and_then(|v| v.trim().parse().ok()));
    if let Some(n) = threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    configure_threads(&cli.global);

    let g = &cli.global;
    let result = match &cli.command {
        Command::Mesh => cmd_mesh(g),
        Command::Prior => cmd_prior(g),
        Command::Observe => cmd_observe(g),
        Command::Infer {
            prior,
            mesh,
            observations,
        } => cmd_infer(g, prior, mesh, observations),
        Command::Select => cmd_scenario(g, Some(ScenarioKind::PlateSelection)),
        Command::Stress => cmd_scenario(g, Some(ScenarioKind::StressInference)),
        Command::Run => cmd_scenario(g, None),
        Command::Gradcheck { points } => cmd_gradcheck(g, *points),
        Command::Verify { dir } => cmd_verify(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{}", error_json("check_failed", &msg));
            ExitCode::from(1)
        }
    }
}
