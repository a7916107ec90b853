//! Experiment configs, cached stage execution and run manifests.

mod config;
mod manifest;
mod stages;

pub use config::{
    validate_config, validate_config_str, AgentRole, EvaluationConfig, ExperimentConfig, LatencyConfig, ProbeConfig, ScalePreset, ShapConfig,
    SweepConfig, Targets, OUT_ENV,
};
pub use manifest::{RunManifest, StepRecord, MANIFEST_FILE};
pub use stages::{
    load_eval_samples, AgentRow, DetectorSuiteReport, Runner, Stage, Status, StepOutcome, SuiteRow, TrainCompareReport, CONTROL,
};
