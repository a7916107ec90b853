use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::{attacked_steps, attribute_flight, collect_states, lstm_window, Dataset, Explainers};
use super::{Detector, DetectorConfig, DetectorKind};
use crate::apf::ApfConfig;
use crate::seed::SeedTree;
use crate::sim::Arena;
use crate::{Error, Exec, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub seed: u64,
    pub step: u32,
}

/// Clean and attacked payloads of the same flight steps for every detector
/// kind. Sample `2i` is the clean version of step `refs[i]`, `2i + 1` the
/// attacked one, in every dataset.
#[derive(Clone, Debug)]
pub struct EvalSamples {
    pub datasets: BTreeMap<DetectorKind, Dataset>,
    pub refs: Vec<SampleRef>,
}

/// Flies `arena` until `cfg.eval_steps` steps with a full window behind them
/// are collected, then attributes each step clean and attacked.
pub fn paired_samples(
    ex: &Explainers,
    arena: &Arc<Arena>,
    shaping: Option<&ApfConfig>,
    cfg: &DetectorConfig,
    tree: &SeedTree,
    exec: Exec,
) -> Result<EvalSamples> {
    let w = cfg.window;
    let flights = collect_states(arena, ex.actor(), shaping, tree, "flight", cfg.eval_steps, w - 1)?;
    let per = exec.map(&flights, |(_, obs)| attribute_flight(ex, obs, &cfg.attack, w, true));
    let template = |kind| Dataset::new(kind, ex.payload_dims(kind, w), ex, cfg.attack);
    let mut fcn = template(DetectorKind::Fcn);
    let mut cnn = template(DetectorKind::Cnn);
    let mut lstm = template(DetectorKind::Lstm);
    let mut refs = Vec::with_capacity(cfg.eval_steps);
    'outer: for ((seed, _), f) in flights.iter().zip(per) {
        let f = f?;
        for t in w - 1..f.clean.len() {
            if refs.len() >= cfg.eval_steps {
                break 'outer;
            }
            let attacked = f.attacked[t].as_ref().expect("attacked step");
            let d = f.deflection[t];
            for (step, label, d) in [(&f.clean[t], 0u8, 0.0f32), (attacked, 1, d)] {
                let full = step.full.as_ref().expect("full attribution at a window end");
                let raw: Vec<f32> = full.iter().map(|&v| v as f32).collect();
                fcn.push(&raw, label, d);
                cnn.push(&ex.cnn_payload(full), label, d);
            }
            let k = attacked_steps(tree, *seed, t, cfg.attack.duration);
            lstm.push(&lstm_window(&f, t, w, 0), 0, 0.0);
            lstm.push(&lstm_window(&f, t, w, k), 1, d);
            refs.push(SampleRef { seed: *seed, step: t as u32 });
        }
    }
    Ok(EvalSamples {
        datasets: BTreeMap::from([(DetectorKind::Fcn, fcn), (DetectorKind::Cnn, cnn), (DetectorKind::Lstm, lstm)]),
        refs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub seed: u64,
    pub step: u32,
    pub label: u8,
    pub score: f32,
    pub deflection_deg: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: DetectorKind,
    pub samples: usize,
    pub accuracy: f64,
    /// Attacked samples flagged, over attacked samples.
    pub detection_rate: f64,
    /// Clean samples flagged, over clean samples.
    pub false_alarm_rate: f64,
    pub scores: Vec<SampleScore>,
}

impl EvalReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.scores {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores every sample of `data`; `refs` maps sample pairs back to flight steps.
pub fn evaluate(det: &Detector, data: &Dataset, refs: &[SampleRef], exec: Exec) -> Result<EvalReport> {
    if det.net().input_dims() != data.dims.as_slice() {
        return Err(Error::Architecture(format!(
            "{} detector expects {:?}, samples are {:?}",
            det.kind(),
            det.net().input_dims(),
            data.dims
        )));
    }
    if data.len() != 2 * refs.len() {
        return Err(Error::Record(format!("{} samples for {} step references", data.len(), refs.len())));
    }
    let scores = exec.map_range(data.len(), |i| det.score(data.payload(i)));
    let mut out = Vec::with_capacity(data.len());
    let (mut hits, mut tp, mut fp) = (0usize, 0usize, 0usize);
    for (i, s) in scores.into_iter().enumerate() {
        let score = s?;
        let label = data.labels[i];
        let flagged = score > 0.5;
        hits += (flagged == (label == 1)) as usize;
        tp += (flagged && label == 1) as usize;
        fp += (flagged && label == 0) as usize;
        let r = refs[i / 2];
        out.push(SampleScore {
            seed: r.seed,
            step: r.step,
            label,
            score,
            deflection_deg: data.deflections[i],
        });
    }
    let attacked = data.attacked().max(1) as f64;
    let clean = (data.len() - data.attacked()).max(1) as f64;
    Ok(EvalReport {
        kind: det.kind(),
        samples: data.len(),
        accuracy: hits as f64 / data.len().max(1) as f64,
        detection_rate: tp as f64 / attacked,
        false_alarm_rate: fp as f64 / clean,
        scores: out,
    })
}
