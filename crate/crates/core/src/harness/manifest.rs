use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::records::{hash_file, sha256_hex};
use crate::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Completed step: what went in, what came out, and how long it took.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Hash over the step's config slice and the hashes of its inputs.
    pub inputs_hash: String,
    /// Path relative to the run root → SHA-256 of the file.
    pub artifacts: BTreeMap<String, String>,
    /// Artifacts that make up the step's report, in order.
    pub reports: Vec<String>,
    /// Hash over the report hashes; timing-only reports are not included.
    pub report_hash: String,
    pub wall_clock_s: f64,
}

impl StepRecord {
    /// True when every recorded artifact is still on disk unchanged.
    pub fn intact(&self, root: &Path) -> bool {
        self.artifacts
            .iter()
            .all(|(rel, hash)| hash_file(&root.join(rel)).map(|h| &h == hash).unwrap_or(false))
    }
}

pub(crate) fn report_hash(artifacts: &BTreeMap<String, String>, reports: &[String]) -> String {
    let joined: Vec<&str> = reports.iter().filter_map(|r| artifacts.get(r).map(String::as_str)).collect();
    sha256_hex(joined.join("\n").as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config_hash: String,
    /// The normalized config, enough to replay every step.
    pub config: ExperimentConfig,
    pub steps: BTreeMap<String, StepRecord>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            steps: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}
