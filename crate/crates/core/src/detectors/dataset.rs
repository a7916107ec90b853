use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use uavxai_nn::BranchedTape;

use super::{DetectorConfig, DetectorKind};
use crate::apf::ApfConfig;
use crate::attack::{attack, AttackConfig};
use crate::ddpg::Actor;
use crate::records::{hash_f32s, read_records, sha256_hex, write_records, RecordHeader};
use crate::runner::{fly, Tamper};
use crate::seed::SeedTree;
use crate::sim::{Arena, Observation, FRAMES};
use crate::xai::{deep_attribution, gru_layer_shap, shap_image, ActorExplainer, AttributionFrame, Background, GruBackground};
use crate::{Error, Exec, Result};

/// Both attribution routes for one actor over one shared background set.
pub struct Explainers<'a> {
    actor: &'a Actor,
    full: ActorExplainer,
    full_background: Background<BranchedTape<f64>>,
    gru: GruBackground,
    model_hash: String,
}

impl<'a> Explainers<'a> {
    pub fn new(actor: &'a Actor, background: &[Observation]) -> Result<Self> {
        let full = ActorExplainer::new(actor);
        let inputs = background.iter().map(|o| ActorExplainer::input_of(actor, o)).collect();
        let full_background = Background::build(&full, inputs)?;
        let gru = GruBackground::new(actor, background)?;
        Ok(Self {
            actor,
            full,
            full_background,
            gru,
            model_hash: sha256_hex(&actor.weight_bytes()),
        })
    }

    pub fn actor(&self) -> &Actor {
        self.actor
    }

    pub fn full(&self, obs: &Observation) -> Result<AttributionFrame> {
        deep_attribution(&self.full, &ActorExplainer::input_of(self.actor, obs), &self.full_background)
    }

    pub fn gru(&self, obs: &Observation) -> Result<AttributionFrame> {
        gru_layer_shap(self.actor, obs, &self.gru)
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn background_hash(&self) -> &str {
        self.full_background.hash()
    }

    pub(super) fn cnn_payload(&self, values: &[f64]) -> Vec<f32> {
        let lidar = self.actor.lidar();
        shap_image(values, FRAMES, lidar.height, lidar.width)
    }

    pub(super) fn payload_dims(&self, kind: DetectorKind, window: usize) -> Vec<usize> {
        let lidar = self.actor.lidar();
        match kind {
            DetectorKind::Fcn => vec![FRAMES * lidar.pixels()],
            DetectorKind::Cnn => vec![FRAMES, 2, lidar.height, lidar.width],
            DetectorKind::Lstm => vec![window, self.gru.explainer().net().input_dims()[0] - self.actor.net().side_len()],
        }
    }
}

/// What one observation contributes to the datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct StepAttribution {
    /// Per-pixel attribution of the full actor, when requested.
    pub full: Option<Vec<f64>>,
    /// Attribution over the GRU embedding.
    pub gru: Vec<f32>,
}

impl StepAttribution {
    fn of(ex: &Explainers, obs: &Observation, full: bool) -> Result<Self> {
        Ok(Self {
            full: if full { Some(ex.full(obs)?.values) } else { None },
            gru: ex.gru(obs)?.values.iter().map(|&v| v as f32).collect(),
        })
    }
}

/// Labelled payloads of one detector kind, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DetectorKind,
    pub dims: Vec<usize>,
    pub payloads: Vec<f32>,
    /// 1 for attacked.
    pub labels: Vec<u8>,
    /// Attack deflection behind each attacked sample, degrees per second;
    /// zero for clean samples.
    pub deflections: Vec<f32>,
    pub model_hash: String,
    pub background_hash: String,
    pub attack: AttackConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub kind: DetectorKind,
    pub dims: Vec<usize>,
    pub count: usize,
    pub attacked: usize,
    /// Record file holding the payloads, relative to the manifest.
    pub records: String,
    pub payload_hash: String,
    pub model_hash: String,
    pub background_hash: String,
    pub attack: AttackConfig,
    pub labels: Vec<u8>,
    pub deflections: Vec<f32>,
}

impl Dataset {
    pub fn new(kind: DetectorKind, dims: Vec<usize>, ex: &Explainers, attack: AttackConfig) -> Self {
        Self {
            kind,
            dims,
            payloads: Vec::new(),
            labels: Vec::new(),
            deflections: Vec::new(),
            model_hash: ex.model_hash().to_string(),
            background_hash: ex.background_hash().to_string(),
            attack,
        }
    }

    pub fn sample_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn payload(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.payloads[i * n..(i + 1) * n]
    }

    pub fn push(&mut self, payload: &[f32], label: u8, deflection: f32) {
        assert_eq!(payload.len(), self.sample_len(), "payload length");
        self.payloads.extend_from_slice(payload);
        self.labels.push(label);
        self.deflections.push(deflection);
    }

    pub fn attacked(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Same payloads with the labels permuted at random.
    pub fn with_shuffled_labels<R: Rng>(&self, rng: &mut R) -> Self {
        let mut out = self.clone();
        for i in (1..out.labels.len()).rev() {
            let j = rng.random_range(0..=i);
            out.labels.swap(i, j);
            out.deflections.swap(i, j);
        }
        out
    }

    pub fn payload_hash(&self) -> String {
        hash_f32s(self.payloads.iter().copied())
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            kind: self.kind,
            dims: self.dims.clone(),
            count: self.len(),
            attacked: self.attacked(),
            records: format!("{}.records", self.kind),
            payload_hash: self.payload_hash(),
            model_hash: self.model_hash.clone(),
            background_hash: self.background_hash.clone(),
            attack: self.attack,
            labels: self.labels.clone(),
            deflections: self.deflections.clone(),
        }
    }

    /// Writes `<kind>.records` and `<kind>.manifest.json`; returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        let mut header = RecordHeader::new(&format!("dataset-{}", self.kind), &self.dims, self.len());
        header.model_hash = Some(self.model_hash.clone());
        header.background_hash = Some(self.background_hash.clone());
        write_records(&dir.join(&manifest.records), &header, &self.payloads)?;
        let path = dir.join(format!("{}.manifest.json", self.kind));
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let (header, payloads) = read_records(&dir.join(&m.records))?;
        if header.dims != m.dims || header.count != m.count || m.labels.len() != m.count || m.deflections.len() != m.count {
            return Err(Error::Record(format!("{} disagrees with its record file", manifest_path.display())));
        }
        let data = Self {
            kind: m.kind,
            dims: m.dims,
            payloads,
            labels: m.labels,
            deflections: m.deflections,
            model_hash: m.model_hash,
            background_hash: m.background_hash,
            attack: m.attack,
        };
        if data.payload_hash() != m.payload_hash {
            return Err(Error::Record(format!("{}: payload hash mismatch", manifest_path.display())));
        }
        Ok(data)
    }
}

struct Recorder(Vec<Observation>);

impl Tamper for Recorder {
    fn tamper(&mut self, _: u32, obs: &Observation) -> Result<Option<Observation>> {
        self.0.push(obs.clone());
        Ok(None)
    }
}

/// Every observation of one flight, in order.
pub fn record_flight(arena: &Arc<Arena>, actor: &Actor, shaping: Option<&ApfConfig>, seed: u64) -> Result<Vec<Observation>> {
    let mut rec = Recorder(Vec::new());
    fly(arena.clone(), seed, actor, shaping, &mut rec, None)?;
    Ok(rec.0)
}

/// Observations of whole flights, seeded from `tree` under `tag`, until at
/// least `min_steps` usable steps are gathered. A step is usable once
/// `skip` steps of its flight have passed.
pub fn collect_states(
    arena: &Arc<Arena>,
    actor: &Actor,
    shaping: Option<&ApfConfig>,
    tree: &SeedTree,
    tag: &str,
    min_steps: usize,
    skip: usize,
) -> Result<Vec<(u64, Vec<Observation>)>> {
    let mut out = Vec::new();
    let mut usable = 0;
    let mut index = 0;
    while usable < min_steps {
        let seed = tree.seed(tag, index);
        index += 1;
        let flight = record_flight(arena, actor, shaping, seed)?;
        usable += flight.len().saturating_sub(skip);
        out.push((seed, flight));
        if index > 100 * (min_steps as u64 + 1) {
            return Err(Error::EmptyDataset(format!("flights under `{tag}` produce no usable steps")));
        }
    }
    Ok(out)
}

/// Attributions of every step of a flight: clean ones for all steps, and
/// attacked ones for steps that can end up inside an attacked window.
pub(super) struct FlightAttributions {
    pub clean: Vec<StepAttribution>,
    pub attacked: Vec<Option<StepAttribution>>,
    pub deflection: Vec<f32>,
}

pub(super) fn attribute_flight(
    ex: &Explainers,
    obs: &[Observation],
    attack_cfg: &AttackConfig,
    window: usize,
    full: bool,
) -> Result<FlightAttributions> {
    let first_attacked = window.saturating_sub(attack_cfg.duration as usize);
    let mut out = FlightAttributions {
        clean: Vec::with_capacity(obs.len()),
        attacked: Vec::with_capacity(obs.len()),
        deflection: Vec::with_capacity(obs.len()),
    };
    for (t, o) in obs.iter().enumerate() {
        let needs_full = full && t + 1 >= window;
        out.clean.push(StepAttribution::of(ex, o, needs_full)?);
        if t >= first_attacked {
            let r = attack(ex.actor(), o, attack_cfg.eps, attack_cfg.iterations)?;
            out.attacked.push(Some(StepAttribution::of(ex, &r.perturbed, needs_full)?));
            out.deflection.push(r.deflection_deg as f32);
        } else {
            out.attacked.push(None);
            out.deflection.push(0.0);
        }
    }
    Ok(out)
}

/// Window of GRU attributions ending at `t` whose newest `k` steps are attacked.
pub(super) fn lstm_window(f: &FlightAttributions, t: usize, window: usize, k: usize) -> Vec<f32> {
    let mut out = Vec::new();
    for s in t + 1 - window..=t {
        let step = if s + k > t {
            f.attacked[s].as_ref().expect("attacked step inside the window")
        } else {
            &f.clean[s]
        };
        out.extend_from_slice(&step.gru);
    }
    out
}

pub(super) fn attacked_steps(tree: &SeedTree, flight: u64, t: usize, duration: u32) -> usize {
    let mut rng = tree.rng("window", flight.wrapping_mul(1 << 20).wrapping_add(t as u64));
    rng.random_range(1..=duration as usize)
}

/// FCN and CNN sets: every state once clean and once attacked.
pub fn build_state_datasets(ex: &Explainers, states: &[Observation], cfg: &DetectorConfig, exec: Exec) -> Result<(Dataset, Dataset)> {
    let pairs = exec.map(states, |o| -> Result<_> {
        let r = attack(ex.actor(), o, cfg.attack.eps, cfg.attack.iterations)?;
        Ok((ex.full(o)?, ex.full(&r.perturbed)?, r.deflection_deg as f32))
    });
    let mut fcn = Dataset::new(DetectorKind::Fcn, ex.payload_dims(DetectorKind::Fcn, cfg.window), ex, cfg.attack);
    let mut cnn = Dataset::new(DetectorKind::Cnn, ex.payload_dims(DetectorKind::Cnn, cfg.window), ex, cfg.attack);
    for p in pairs {
        let (clean, attacked, d) = p?;
        for (frame, label, d) in [(&clean, 0, 0.0), (&attacked, 1, d)] {
            let raw: Vec<f32> = frame.values.iter().map(|&v| v as f32).collect();
            fcn.push(&raw, label, d);
            cnn.push(&ex.cnn_payload(&frame.values), label, d);
        }
    }
    Ok((fcn, cnn))
}

/// LSTM set: every full window of the flights once clean and once with its
/// newest 1..=duration steps attacked, capped at `windows_per_class` each.
pub fn build_lstm_dataset(ex: &Explainers, flights: &[(u64, Vec<Observation>)], cfg: &DetectorConfig, tree: &SeedTree, exec: Exec) -> Result<Dataset> {
    let w = cfg.window;
    let per = exec.map(flights, |(_, obs)| attribute_flight(ex, obs, &cfg.attack, w, false));
    let mut data = Dataset::new(DetectorKind::Lstm, ex.payload_dims(DetectorKind::Lstm, w), ex, cfg.attack);
    'outer: for ((seed, _), f) in flights.iter().zip(per) {
        let f = f?;
        for t in w - 1..f.clean.len() {
            if data.len() >= 2 * cfg.windows_per_class {
                break 'outer;
            }
            let k = attacked_steps(tree, *seed, t, cfg.attack.duration);
            data.push(&lstm_window(&f, t, w, 0), 0, 0.0);
            data.push(&lstm_window(&f, t, w, k), 1, f.deflection[t]);
        }
    }
    Ok(data)
}

/// `count` evenly spaced observations from seeded flights.
pub fn sample_states(arena: &Arc<Arena>, actor: &Actor, shaping: Option<&ApfConfig>, tree: &SeedTree, count: usize) -> Result<Vec<Observation>> {
    let flights = collect_states(arena, actor, shaping, tree, "flight", count * 4, 0)?;
    let all: Vec<&Observation> = flights.iter().flat_map(|(_, o)| o).collect();
    let stride = all.len() as f64 / count as f64;
    Ok((0..count).map(|i| all[(i as f64 * stride) as usize].clone()).collect())
}

/// All three training sets from flights on `arena`.
pub fn build_datasets(
    ex: &Explainers,
    arena: &Arc<Arena>,
    shaping: Option<&ApfConfig>,
    cfg: &DetectorConfig,
    tree: &SeedTree,
    exec: Exec,
) -> Result<BTreeMap<DetectorKind, Dataset>> {
    let flights = collect_states(arena, ex.actor(), shaping, &tree.child("states"), "flight", cfg.states, 0)?;
    let states: Vec<Observation> = flights.iter().flat_map(|(_, o)| o.iter().cloned()).take(cfg.states).collect();
    let (fcn, cnn) = build_state_datasets(ex, &states, cfg, exec)?;
    let flights = collect_states(
        arena,
        ex.actor(),
        shaping,
        &tree.child("windows"),
        "flight",
        cfg.windows_per_class,
        cfg.window - 1,
    )?;
    let lstm = build_lstm_dataset(ex, &flights, cfg, &tree.child("windows"), exec)?;
    Ok(BTreeMap::from([(DetectorKind::Fcn, fcn), (DetectorKind::Cnn, cnn), (DetectorKind::Lstm, lstm)]))
}
