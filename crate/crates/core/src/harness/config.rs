use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::apf::ApfConfig;
use crate::attack::{AttackConfig, PROBE_BEARINGS, PROBE_GAPS};
use crate::ddpg::TrainConfig;
use crate::detectors::DetectorConfig;
use crate::records::sha256_hex;
use crate::sim::{Arena, LidarConfig};
use crate::{Error, Result};

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "UAVXAI_OUT";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalePreset {
    #[default]
    Desk,
    Full,
    Compact,
}

impl ScalePreset {
    pub fn lidar(self) -> LidarConfig {
        match self {
            ScalePreset::Desk => LidarConfig::desk(),
            ScalePreset::Full => LidarConfig::full(),
            ScalePreset::Compact => LidarConfig::compact(),
        }
    }
}

/// Which of the two trained agents a stage works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentRole {
    ApfOn,
    ApfOff,
}

impl AgentRole {
    pub const BOTH: [AgentRole; 2] = [AgentRole::ApfOn, AgentRole::ApfOff];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::ApfOn => "apf-on",
            AgentRole::ApfOff => "apf-off",
        }
    }

    pub fn shaped(self) -> bool {
        self == AgentRole::ApfOn
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Targets {
    /// Agent attacked by the sweep, probe and campaign stages.
    pub attack: AgentRole,
    /// Agent explained by the trace, detector and latency stages.
    pub explain: AgentRole,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            attack: AgentRole::ApfOn,
            explain: AgentRole::ApfOn,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Validation-course states attacked per grid cell.
    pub states: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            iterations: vec![1, 2, 5, 10, 20],
            states: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub gaps: Vec<f64>,
    pub bearings_deg: Vec<f64>,
    pub goal_distance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            gaps: PROBE_GAPS.to_vec(),
            bearings_deg: PROBE_BEARINGS.to_vec(),
            goal_distance: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Seeded episodes per evaluation and per campaign leg.
    pub episodes: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapConfig {
    /// Background observations for both attribution routes.
    pub background: usize,
    /// Evaluation-seed index of the traced flight.
    pub trace_episode: u64,
    /// Observations whose full-image attributions are written as records.
    pub images: usize,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            background: 30,
            trace_episode: 0,
            images: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyConfig {
    pub runs: usize,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self { runs: 50 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub preset: ScalePreset,
    /// Root of every seed in the run.
    pub seed: u64,
    /// Output root; the environment override wins over this.
    pub output: Option<PathBuf>,
    /// Arena JSON files; built-in courses when absent. Relative paths
    /// resolve against the config file's directory.
    pub training_arena: Option<PathBuf>,
    pub validation_arena: Option<PathBuf>,
    /// Sensor and image size; filled from the preset when absent.
    pub lidar: Option<LidarConfig>,
    pub train: TrainConfig,
    pub apf: ApfConfig,
    pub attack: AttackConfig,
    pub sweep: SweepConfig,
    pub probe: ProbeConfig,
    pub evaluation: EvaluationConfig,
    pub detectors: DetectorConfig,
    pub shap: ShapConfig,
    pub latency: LatencyConfig,
    pub targets: Targets,
}

impl ExperimentConfig {
    /// Defaults for a preset, lidar filled in.
    pub fn preset(preset: ScalePreset) -> Self {
        Self {
            preset,
            lidar: Some(preset.lidar()),
            ..Self::default()
        }
    }

    pub fn lidar(&self) -> LidarConfig {
        self.lidar.unwrap_or_else(|| self.preset.lidar())
    }

    /// Fills every derived default so the echo is complete.
    pub fn normalized(mut self) -> Self {
        self.lidar = Some(self.lidar());
        self
    }

    pub fn training_arena(&self) -> Result<Arena> {
        self.arena(self.training_arena.as_deref(), Arena::training)
    }

    pub fn validation_arena(&self) -> Result<Arena> {
        self.arena(self.validation_arena.as_deref(), Arena::validation)
    }

    fn arena(&self, file: Option<&Path>, builtin: fn() -> Arena) -> Result<Arena> {
        let arena = match file {
            Some(p) => Arena::from_json(&std::fs::read_to_string(p)?)?,
            None => builtin(),
        };
        Ok(arena.with_lidar(self.lidar()))
    }

    /// Output root: the environment override, then the config, then `runs/`.
    pub fn output_root(&self) -> PathBuf {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output.clone())
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn hash(&self) -> String {
        hash_json(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Semantic checks, each issue prefixed with its JSON path.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.train.issues("train"));
        out.extend(self.attack.issues("attack"));
        out.extend(self.detectors.issues("detectors"));
        let lidar = self.lidar();
        if lidar.width == 0 || lidar.height == 0 || lidar.rays == 0 || lidar.beams == 0 {
            out.push("lidar: rays, beams, width and height must be positive".into());
        }
        if !(lidar.max_range > 0.0) {
            out.push("lidar.max_range: must be positive".into());
        }
        if self.apf.k_v < 0.0 || self.apf.k_omega < 0.0 {
            out.push("apf.k_v: gains must be non-negative".into());
        }
        for (i, e) in self.sweep.eps.iter().enumerate() {
            if !(*e >= 0.0) {
                out.push(format!("sweep.eps[{i}]: must be non-negative, got {e}"));
            }
        }
        for (i, &it) in self.sweep.iterations.iter().enumerate() {
            if it == 0 {
                out.push(format!("sweep.iterations[{i}]: must be at least 1"));
            }
        }
        if self.sweep.states == 0 {
            out.push("sweep.states: must be at least 1".into());
        }
        if self.probe.gaps.iter().any(|g| !(*g > 0.0)) {
            out.push("probe.gaps: every gap must be positive".into());
        }
        if !(self.probe.goal_distance > 0.0) {
            out.push("probe.goal_distance: must be positive".into());
        }
        if self.evaluation.episodes == 0 {
            out.push("evaluation.episodes: must be at least 1".into());
        }
        if self.shap.background == 0 {
            out.push("shap.background: must be at least 1".into());
        }
        if self.latency.runs == 0 {
            out.push("latency.runs: must be at least 1".into());
        }
        for (key, file) in [("training_arena", &self.training_arena), ("validation_arena", &self.validation_arena)] {
            let Some(path) = file else { continue };
            match std::fs::read_to_string(path) {
                Err(e) => out.push(format!("{key}: cannot read {}: {e}", path.display())),
                Ok(text) => {
                    if let Err(e) = Arena::from_json(&text) {
                        out.push(format!("{key}: {e}"));
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn hash_json(v: &Value) -> String {
    sha256_hex(&serde_json::to_vec(v).expect("json serializes"))
}

/// Keys present in `given` but absent from `known`, as JSON paths.
fn unknown_keys(given: &Value, known: &Value, path: &str, out: &mut Vec<String>) {
    let join = |key: &str| if path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
    match (given, known) {
        (Value::Object(g), Value::Object(k)) => {
            for (key, v) in g {
                match k.get(key) {
                    None => out.push(format!("{}: unknown key", join(key))),
                    Some(kv) => unknown_keys(v, kv, &join(key), out),
                }
            }
        }
        (Value::Array(g), Value::Array(k)) if !k.is_empty() => {
            for (i, v) in g.iter().enumerate() {
                unknown_keys(v, &k[0], &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// Parses, fills defaults and checks a config document. Every problem is
/// reported with its JSON path; an empty document yields the defaults.
pub fn validate_config_str(text: &str, base: Option<&Path>) -> Result<ExperimentConfig> {
    let value: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(vec![format!("$: {e}")]))?
    };
    if !value.is_object() {
        return Err(Error::InvalidConfig(vec!["$: config must be a JSON object".into()]));
    }
    let known = serde_json::to_value(ExperimentConfig::preset(ScalePreset::Desk))?;
    let mut issues = Vec::new();
    unknown_keys(&value, &known, "", &mut issues);
    if !issues.is_empty() {
        return Err(Error::InvalidConfig(issues));
    }
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::InvalidConfig(vec![format!("{path}: {}", e.into_inner())])
    })?;
    if let Some(base) = base {
        for p in [&mut cfg.training_arena, &mut cfg.validation_arena, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    let issues = cfg.issues();
    if !issues.is_empty() {
        return Err(Error::InvalidConfig(issues));
    }
    Ok(cfg.normalized())
}

pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    validate_config_str(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(text: &str) -> Vec<String> {
        match validate_config_str(text, None) {
            Err(Error::InvalidConfig(v)) => v,
            other => panic!("expected invalid config, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_the_default() {
        let cfg = validate_config_str("", None).unwrap();
        assert_eq!(cfg, ExperimentConfig::preset(ScalePreset::Desk));
        assert_eq!(validate_config_str("{}", None).unwrap(), cfg);
    }

    #[test]
    fn negative_eps_names_its_path() {
        let v = issues(r#"{"attack": {"eps": -1}}"#);
        assert!(v.iter().any(|i| i.starts_with("attack.eps")), "{v:?}");
    }

    #[test]
    fn desk_preset_echoes_64_by_32() {
        let cfg = validate_config_str(r#"{"preset": "desk"}"#, None).unwrap();
        let lidar = cfg.lidar.unwrap();
        assert_eq!((lidar.width, lidar.height), (64, 32));
    }

    #[test]
    fn unknown_keys_are_listed_with_paths() {
        let v = issues(r#"{"atack": 1, "train": {"gama": 0.9, "network": {"conv": [{"filter": 3}]}}}"#);
        assert!(v.contains(&"atack: unknown key".to_string()), "{v:?}");
        assert!(v.contains(&"train.gama: unknown key".to_string()), "{v:?}");
        assert!(v.contains(&"train.network.conv[0].filter: unknown key".to_string()), "{v:?}");
    }

    #[test]
    fn type_errors_carry_paths() {
        let v = issues(r#"{"train": {"batch": "many"}}"#);
        assert!(v[0].starts_with("train.batch"), "{v:?}");
    }

    #[test]
    fn missing_arena_file_is_reported() {
        let v = issues(r#"{"training_arena": "/nonexistent/arena.json"}"#);
        assert!(v[0].starts_with("training_arena"), "{v:?}");
    }
}
