use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::Explainers;
use super::{Detector, DetectorKind};
use crate::sim::Observation;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStat {
    pub name: String,
    pub runs: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub stats: Vec<LatencyStat>,
    /// Full-image attribution time over GRU-layer attribution time.
    pub speedup: f64,
    /// GRU attribution plus LSTM detector inference, mean per step.
    pub pipeline_ms: f64,
    /// One control step.
    pub budget_ms: f64,
}

impl LatencyReport {
    pub fn stat(&self, name: &str) -> Option<&LatencyStat> {
        self.stats.iter().find(|s| s.name == name)
    }

    pub fn within_budget(&self) -> bool {
        self.pipeline_ms < self.budget_ms
    }
}

fn time<T>(name: &str, runs: usize, mut f: impl FnMut(usize) -> Result<T>) -> Result<LatencyStat> {
    f(0)?;
    let mut ms = Vec::with_capacity(runs);
    for i in 0..runs {
        let t = Instant::now();
        std::hint::black_box(f(i)?);
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    Ok(LatencyStat {
        name: name.to_string(),
        runs,
        mean_ms: ms.iter().sum::<f64>() / runs as f64,
        median_ms: ms[runs / 2],
        max_ms: ms[runs - 1],
    })
}

/// Single-threaded wall-clock timings of each per-step stage, cycling
/// through `states`. Timings depend on shapes only, so any weights do.
pub fn latency_bench(ex: &Explainers, detectors: &[&Detector], states: &[Observation], runs: usize) -> Result<LatencyReport> {
    if states.is_empty() || runs == 0 {
        return Err(Error::EmptyDataset("latency states".into()));
    }
    let pick = |i: usize| &states[i % states.len()];
    let mut stats = vec![
        time("action", runs, |i| ex.actor().act(pick(i)))?,
        time("full_attribution", runs, |i| ex.full(pick(i)))?,
        time("gru_attribution", runs, |i| ex.gru(pick(i)))?,
    ];
    for d in detectors {
        let payload = vec![0.5f32; d.net().input_dims().iter().product()];
        stats.push(time(&format!("{}_inference", d.kind()), runs, |_| d.score(&payload))?);
    }
    let mean = |name: &str| stats.iter().find(|s| s.name == name).map(|s| s.mean_ms);
    let full = mean("full_attribution").unwrap_or(f64::NAN);
    let gru = mean("gru_attribution").unwrap_or(f64::NAN);
    let lstm = mean(&format!("{}_inference", DetectorKind::Lstm)).unwrap_or(0.0);
    Ok(LatencyReport {
        speedup: full / gru,
        pipeline_ms: gru + lstm,
        budget_ms: ex.actor().kinematics().dt * 1e3,
        stats,
    })
}
