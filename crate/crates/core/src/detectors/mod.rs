//! Adversarial-input detectors that read attributions instead of raw depth.
//!
//! Three payloads are derived from the same flights: the raw per-pixel
//! attribution of the full actor (FCN), its two-channel image rendering
//! (CNN), and windows of GRU-embedding attributions over consecutive steps
//! (LSTM). Each detector outputs a probability that the current step was
//! attacked; anything above one half counts as a detection.

mod bench;
mod dataset;
mod eval;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bench::{latency_bench, LatencyReport, LatencyStat};
pub use dataset::{
    sample_states, build_datasets, build_lstm_dataset, build_state_datasets, collect_states, record_flight, Dataset, DatasetManifest, Explainers, StepAttribution,
};
pub use eval::{evaluate, paired_samples, EvalReport, EvalSamples, SampleRef, SampleScore};
pub use model::Detector;
pub use train::{split_indices, train_detector, EpochStat, Split, TrainCurves};

use crate::attack::AttackConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Fcn,
    Cnn,
    Lstm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Fcn, DetectorKind::Cnn, DetectorKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Fcn => "fcn",
            DetectorKind::Cnn => "cnn",
            DetectorKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fcn" => Ok(DetectorKind::Fcn),
            "cnn" => Ok(DetectorKind::Cnn),
            "lstm" => Ok(DetectorKind::Lstm),
            other => Err(format!("unknown detector kind `{other}` (expected fcn, cnn or lstm)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl FitConfig {
    fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push(format!("{path}.epochs: must be at least 1"));
        }
        if self.batch == 0 {
            out.push(format!("{path}.batch: must be at least 1"));
        }
        if !(self.lr > 0.0) {
            out.push(format!("{path}.lr: must be positive"));
        }
        out
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch: 32,
            lr: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Observations in the attribution background set.
    pub background: usize,
    /// Training-course states attributed clean and attacked for FCN/CNN.
    pub states: usize,
    /// Windows per class for the LSTM set.
    pub windows_per_class: usize,
    /// Consecutive steps in one LSTM window.
    pub window: usize,
    /// Paired validation-course steps scored by every detector.
    pub eval_steps: usize,
    /// Perturbation used to build every dataset.
    pub attack: AttackConfig,
    /// Conv filter counts for the CNN, two convs per pooling stage.
    pub cnn_filters: Vec<usize>,
    pub cnn_dense: Vec<usize>,
    pub fcn_dense: Vec<usize>,
    pub lstm_units: usize,
    pub lstm_dense: Vec<usize>,
    pub fcn: FitConfig,
    pub cnn: FitConfig,
    pub lstm: FitConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            background: 30,
            states: 2000,
            windows_per_class: 3000,
            window: 10,
            eval_steps: 1000,
            attack: AttackConfig::default(),
            cnn_filters: vec![8, 8, 16, 16, 32, 32],
            cnn_dense: vec![256, 128, 64, 16],
            fcn_dense: vec![128, 64, 16],
            lstm_units: 100,
            lstm_dense: vec![64, 32, 16],
            fcn: FitConfig::default(),
            cnn: FitConfig::default(),
            lstm: FitConfig {
                epochs: 30,
                ..FitConfig::default()
            },
        }
    }
}

impl DetectorConfig {
    pub fn fit(&self, kind: DetectorKind) -> &FitConfig {
        match kind {
            DetectorKind::Fcn => &self.fcn,
            DetectorKind::Cnn => &self.cnn,
            DetectorKind::Lstm => &self.lstm,
        }
    }

    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, key: &str, what: &str| {
            if !ok {
                out.push(format!("{path}.{key}: {what}"));
            }
        };
        check(self.background >= 1, "background", "must be at least 1");
        check(self.states >= 1, "states", "must be at least 1");
        check(self.windows_per_class >= 1, "windows_per_class", "must be at least 1");
        check(self.window >= 1, "window", "must be at least 1");
        check(self.eval_steps >= 1, "eval_steps", "must be at least 1");
        check(
            self.cnn_filters.len() % 2 == 0 && !self.cnn_filters.is_empty(),
            "cnn_filters",
            "needs a non-empty, even number of entries",
        );
        check(self.lstm_units >= 1, "lstm_units", "must be at least 1");
        check(
            self.attack.duration as usize <= self.window,
            "attack.duration",
            "must not exceed the window length",
        );
        out.extend(self.attack.issues(&format!("{path}.attack")));
        out.extend(self.fcn.issues(&format!("{path}.fcn")));
        out.extend(self.cnn.issues(&format!("{path}.cnn")));
        out.extend(self.lstm.issues(&format!("{path}.lstm")));
        out
    }
}
