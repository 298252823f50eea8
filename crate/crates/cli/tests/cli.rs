use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn statfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_statfem"))
        .args(args)
        .env("STATFEM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_of(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error is JSON")
}

#[test]
fn prior_writes_expansion_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bar_homogeneous.json");
    let out = statfem(&["--config", s(&cfg), "--out", s(dir.path()), "prior"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["prior_LE.json", "prior_moments_LE.csv", "mesh.txt", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let pc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("prior_LE.json")).unwrap()).unwrap();
    assert!(pc.is_object());
    assert!(statfem(&["verify", s(dir.path())]).status.success());
}

#[test]
fn observe_then_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bar_homogeneous.json");
    let (p, o, i) = (dir.path().join("p"), dir.path().join("o"), dir.path().join("i"));
    assert!(statfem(&["--config", s(&cfg), "--out", s(&p), "prior"]).status.success());
    assert!(statfem(&["--config", s(&cfg), "--out", s(&o), "observe"]).status.success());
    let out = statfem(&[
        "--config",
        s(&cfg),
        "--out",
        s(&i),
        "infer",
        "--prior",
        s(&p.join("prior_LE.json")),
        "--mesh",
        s(&p.join("mesh.txt")),
        "--observations",
        s(&o.join("observations.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(i.join("hyperparameters.json")).unwrap()).unwrap();
    for k in ["rho", "sigma_d", "l_d", "neg_log_marginal", "converged", "iterations"] {
        assert!(hp.get(k).is_some(), "hyperparameters.json lacks {k}");
    }
    assert!(i.join("posterior_field.csv").exists());
}

#[test]
fn infer_with_missing_observations_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bar_homogeneous.json");
    let p = dir.path().join("p");
    assert!(statfem(&["--config", s(&cfg), "--out", s(&p), "prior"]).status.success());
    let missing = dir.path().join("no_such_observations.csv");
    let out = statfem(&[
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("i")),
        "infer",
        "--prior",
        s(&p.join("prior_LE.json")),
        "--mesh",
        s(&p.join("mesh.txt")),
        "--observations",
        s(&missing),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert!(err["error"]["kind"].is_string());
    assert!(err["error"]["message"].as_str().unwrap().contains("no_such_observations.csv"));
}

#[test]
fn gradcheck_passes_on_bar() {
    let cfg = config("bar_homogeneous.json");
    let out = statfem(&["--config", s(&cfg), "gradcheck", "--points", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max relative gradient error"));
}

#[test]
fn tampered_artifact_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bar_homogeneous.json");
    assert!(statfem(&["--config", s(&cfg), "--out", s(dir.path()), "mesh"]).status.success());
    assert!(statfem(&["verify", s(dir.path())]).status.success());
    let mesh = dir.path().join("mesh.txt");
    let mut text = std::fs::read_to_string(&mesh).unwrap();
    text.push_str("\n# edited\n");
    std::fs::write(&mesh, text).unwrap();
    let out = statfem(&["verify", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mesh.txt"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(statfem(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(statfem(&["infer", "--prior"]).status.code(), Some(2));
}

#[test]
fn missing_config_is_a_domain_error() {
    let out = statfem(&["prior"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["error"]["kind"], "invalid_input");
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"name":"x","kind":"bar_homogeneous","seed":1,"colour":"red"}"#).unwrap();
    let out = statfem(&["--config", s(&cfg), "--out", s(&dir.path().join("o")), "mesh"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_of(&out)["error"]["message"].as_str().unwrap().contains("colour"));
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bar_inhomogeneous.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = statfem(&["--config", s(&cfg), "--out", s(d), "--seed", "7", "run"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ma = std::fs::read_to_string(a.join("manifest.json")).unwrap();
    let mb = std::fs::read_to_string(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let c = dir.path().join("c");
    assert!(statfem(&["--config", s(&cfg), "--out", s(&c), "--seed", "8", "run"]).status.success());
    assert_ne!(ma, std::fs::read_to_string(c.join("manifest.json")).unwrap());
}
