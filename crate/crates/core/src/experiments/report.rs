use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh_fem::MaterialModel;
use crate::statfem::EstimationResult;

/// Long-format table: one observation per row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Shortest round-trip text for a float.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", content = "data", rename_all = "snake_case")]
pub enum ArtifactContent {
    Csv(Table),
    Json(serde_json::Value),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub name: String,
    pub content: ArtifactContent,
}

impl Artifact {
    pub fn bytes(&self) -> Vec<u8> {
        match &self.content {
            ArtifactContent::Csv(t) => t.to_csv().into_bytes(),
            ArtifactContent::Json(v) => {
                let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
                s.push('\n');
                s.into_bytes()
            }
            ArtifactContent::Text(s) => s.clone().into_bytes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub model: MaterialModel,
    pub n_reads: usize,
    pub result: EstimationResult,
}

/// Everything a scenario produced: named summary scalars, the estimates and the
/// artifacts to be written.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub scalars: BTreeMap<String, f64>,
    pub estimates: Vec<EstimateRecord>,
    pub selected_model: Option<MaterialModel>,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
}

impl ScenarioReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.scalars.insert(key.into(), value);
    }

    /// Panics on a missing key; keys are fixed by the scenario runners.
    pub fn scalar(&self, key: &str) -> f64 {
        *self.scalars.get(key).unwrap_or_else(|| panic!("report '{}' has no scalar '{key}'", self.name))
    }

    pub fn estimate(&self, model: MaterialModel, n_reads: usize) -> Option<&EstimationResult> {
        self.estimates
            .iter()
            .find(|e| e.model == model && e.n_reads == n_reads)
            .map(|e| &e.result)
    }

    pub fn add_csv(&mut self, name: &str, table: Table) {
        self.artifacts.push(Artifact {
            name: name.into(),
            content: ArtifactContent::Csv(table),
        });
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.artifacts.push(Artifact {
            name: name.into(),
            content: ArtifactContent::Json(serde_json::to_value(value).expect("serializable artifact")),
        });
    }

    pub fn add_text(&mut self, name: &str, text: String) {
        self.artifacts.push(Artifact {
            name: name.into(),
            content: ArtifactContent::Text(text),
        });
    }

    /// Adds `summary.json` with the scalars, estimates and selection.
    pub fn add_summary(&mut self) {
        let summary = serde_json::to_value(&*self).expect("report serializes");
        self.artifacts.retain(|a| a.name != "summary.json");
        self.artifacts.push(Artifact {
            name: "summary.json".into(),
            content: ArtifactContent::Json(summary),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every artifact under `dir` (sequentially) and a manifest with content
/// hashes. Returns the manifest path.
pub fn emit_report(report: &ScenarioReport, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for a in &report.artifacts {
        if a.name == MANIFEST_NAME || a.name.contains("..") || Path::new(&a.name).is_absolute() {
            return Err(Error::InvalidInput(format!("artifact name '{}' not allowed", a.name)));
        }
        let bytes = a.bytes();
        let path = dir.join(&a.name);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        manifest.artifacts.push(ManifestEntry {
            path: a.name.clone(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    write_manifest(&manifest, dir)
}

pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Hashes files already on disk into a manifest entry.
pub fn manifest_entry(dir: &Path, name: &str) -> Result<ManifestEntry> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestEntry {
        path: name.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Result of checking a directory against its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Verification {
    pub checked: usize,
    pub missing: Vec<String>,
    pub mismatched: Vec<String>,
}

impl Verification {
    pub fn ok(&self) -> bool {
        self.missing.is_empty() && self.mismatched.is_empty()
    }

    pub fn describe(&self) -> String {
        let mut s = format!("{} artifacts checked", self.checked);
        for m in &self.missing {
            let _ = write!(s, "; missing {m}");
        }
        for m in &self.mismatched {
            let _ = write!(s, "; hash mismatch {m}");
        }
        s
    }
}

pub fn verify_manifest(dir: &Path) -> Result<Verification> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let mut v = Verification::default();
    for entry in &manifest.artifacts {
        v.checked += 1;
        match std::fs::read(dir.join(&entry.path)) {
            Ok(bytes) => {
                if sha256_hex(&bytes) != entry.sha256 {
                    v.mismatched.push(entry.path.clone());
                }
            }
            Err(_) => v.missing.push(entry.path.clone()),
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_has_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = emit_report(&ScenarioReport::new("empty"), dir.path()).unwrap();
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert!(m.artifacts.is_empty());
        assert!(verify_manifest(dir.path()).unwrap().ok());
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = ScenarioReport::new("t");
        let mut t = Table::new(&["node_id", "value"]);
        t.push(vec!["0".into(), num(0.1)]);
        r.add_csv("field.csv", t);
        emit_report(&r, dir.path()).unwrap();
        assert!(verify_manifest(dir.path()).unwrap().ok());
        std::fs::write(dir.path().join("field.csv"), "node_id,value\n0,0.2\n").unwrap();
        let v = verify_manifest(dir.path()).unwrap();
        assert_eq!(v.mismatched, vec!["field.csv".to_string()]);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
