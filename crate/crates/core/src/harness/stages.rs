use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{hash_json, AgentRole, ExperimentConfig};
use super::manifest::{report_hash, RunManifest, StepRecord, MANIFEST_FILE};
use crate::attack::{self, CampaignReport, Placement, ProbeCell, SweepCell};
use crate::ddpg::{self, steps_to_reach, Actor, EpisodeStat};
use crate::detectors::{self, Dataset, Detector, DetectorKind, EvalReport, EvalSamples, Explainers, SampleRef, TrainCurves};
use crate::records::{hash_file, read_observations, write_observations, write_records, RecordHeader};
use crate::runner::evaluate;
use crate::seed::SeedTree;
use crate::sim::{Arena, Observation, FRAMES};
use crate::xai::{episode_shap_trace, shap_image, GruBackground};
use crate::{Error, Exec, Result};

/// End-to-end stages, each backed by one or more manifest steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    TrainCompare,
    AttackSweep,
    DeflectionProbe,
    Campaign,
    ShapTrace,
    DetectorSuite,
    Latency,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::TrainCompare,
        Stage::AttackSweep,
        Stage::DeflectionProbe,
        Stage::Campaign,
        Stage::ShapTrace,
        Stage::DetectorSuite,
        Stage::Latency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrainCompare => "train-compare",
            Stage::AttackSweep => "attack-sweep",
            Stage::DeflectionProbe => "deflection-probe",
            Stage::Campaign => "campaign",
            Stage::ShapTrace => "shap-trace",
            Stage::DetectorSuite => "detector-suite",
            Stage::Latency => "latency",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ran,
    UpToDate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: String,
    pub status: Status,
    pub reports: Vec<PathBuf>,
    pub report_hash: String,
    pub wall_clock_s: f64,
}

/// Files a step produced, relative to the run root.
#[derive(Default)]
struct Outputs {
    artifacts: Vec<String>,
    reports: Vec<String>,
}

impl Outputs {
    fn report(mut self, rel: impl Into<String>) -> Self {
        let rel = rel.into();
        self.artifacts.push(rel.clone());
        self.reports.push(rel);
        self
    }

    fn artifact(mut self, rel: impl Into<String>) -> Self {
        self.artifacts.push(rel.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub agent: AgentRole,
    pub episodes: usize,
    pub train_steps: u64,
    pub final_rolling_success: f64,
    /// Training steps until the rolling success first reached the threshold.
    pub steps_to_threshold: Option<u64>,
    pub completion: f64,
    pub mean_steps: f64,
    pub collisions: usize,
    pub timeouts: usize,
    pub out_of_bounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainCompareReport {
    /// Final rolling success of the unshaped agent.
    pub threshold: f64,
    pub rows: Vec<AgentRow>,
    /// Shaped minus unshaped evaluation completion, percentage points.
    pub completion_gain_points: f64,
}

impl TrainCompareReport {
    pub fn row(&self, role: AgentRole) -> Option<&AgentRow> {
        self.rows.iter().find(|r| r.agent == role)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub detector: String,
    pub train_val_accuracy: f64,
    pub train_test_accuracy: f64,
    pub best_epoch: usize,
    pub accuracy: f64,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSuiteReport {
    pub eval_steps: usize,
    pub rows: Vec<SuiteRow>,
}

impl DetectorSuiteReport {
    pub fn row(&self, name: &str) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.detector == name)
    }
}

/// Control detector trained on permuted labels.
pub const CONTROL: &str = "lstm-shuffled";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_train_log(path: &Path) -> Result<Vec<EpisodeStat>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Runs steps against one output root and keeps its manifest current.
pub struct Runner {
    cfg: ExperimentConfig,
    root: PathBuf,
    tree: SeedTree,
    exec: Exec,
    force: bool,
    manifest: RunManifest,
}

impl Runner {
    /// Opens `root`, picking up an existing manifest so finished steps with
    /// unchanged inputs are not repeated.
    pub fn new(cfg: ExperimentConfig, root: PathBuf, exec: Exec) -> Result<Self> {
        let cfg = cfg.normalized();
        let path = root.join(MANIFEST_FILE);
        let mut manifest = if path.exists() {
            RunManifest::load(&path)?
        } else {
            RunManifest::new(&cfg)
        };
        manifest.config_hash = cfg.hash();
        manifest.config = cfg.clone();
        Ok(Self {
            tree: SeedTree::new(cfg.seed),
            cfg,
            root,
            exec,
            force: false,
            manifest,
        })
    }

    /// Re-run steps even when the manifest says they are current.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn run_step(&mut self, name: &str, inputs: Value, f: impl FnOnce(&Self) -> Result<Outputs>) -> Result<StepOutcome> {
        let inputs_hash = hash_json(&json!({ "step": name, "inputs": inputs }));
        if !self.force {
            if let Some(rec) = self.manifest.steps.get(name) {
                if rec.inputs_hash == inputs_hash && rec.intact(&self.root) {
                    log::info!("{name}: up to date");
                    return Ok(StepOutcome {
                        step: name.into(),
                        status: Status::UpToDate,
                        reports: rec.reports.iter().map(|r| self.root.join(r)).collect(),
                        report_hash: rec.report_hash.clone(),
                        wall_clock_s: rec.wall_clock_s,
                    });
                }
            }
        }
        log::info!("{name}: running");
        let started = Instant::now();
        let out = f(self)?;
        let wall_clock_s = started.elapsed().as_secs_f64();
        let mut artifacts = BTreeMap::new();
        for rel in &out.artifacts {
            artifacts.insert(rel.clone(), hash_file(&self.root.join(rel))?);
        }
        let rec = StepRecord {
            inputs_hash,
            report_hash: report_hash(&artifacts, &out.reports),
            artifacts,
            reports: out.reports.clone(),
            wall_clock_s,
        };
        let outcome = StepOutcome {
            step: name.into(),
            status: Status::Ran,
            reports: out.reports.iter().map(|r| self.root.join(r)).collect(),
            report_hash: rec.report_hash.clone(),
            wall_clock_s,
        };
        self.manifest.steps.insert(name.into(), rec);
        self.manifest.save(&self.root.join(MANIFEST_FILE))?;
        Ok(outcome)
    }

    /// Hash of an artifact some earlier step must have produced.
    fn prerequisite(&self, hint: &str, rel: &str) -> Result<String> {
        let path = self.root.join(rel);
        if !path.exists() {
            return Err(Error::MissingPrerequisite {
                stage: hint.into(),
                path,
            });
        }
        hash_file(&path)
    }

    fn agent_dir(role: AgentRole) -> String {
        format!("agents/{}", role.name())
    }

    fn actor_rel(role: AgentRole) -> String {
        format!("{}/actor.uavw", Self::agent_dir(role))
    }

    fn train_hint(role: AgentRole) -> String {
        format!("train --apf {}", if role.shaped() { "on" } else { "off" })
    }

    fn actor_hash(&self, role: AgentRole) -> Result<String> {
        self.prerequisite(&Self::train_hint(role), &Self::actor_rel(role))
    }

    pub fn load_actor(&self, role: AgentRole) -> Result<Actor> {
        self.actor_hash(role)?;
        Actor::load(&self.path(&Self::actor_rel(role)))
    }

    fn shaping(&self, role: AgentRole) -> Option<&crate::apf::ApfConfig> {
        role.shaped().then_some(&self.cfg.apf)
    }

    fn arenas(&self) -> Result<(Arc<Arena>, Arc<Arena>)> {
        Ok((Arc::new(self.cfg.training_arena()?), Arc::new(self.cfg.validation_arena()?)))
    }

    fn arena_json(&self) -> Result<Value> {
        let (t, v) = self.arenas()?;
        Ok(json!({ "training": *t, "validation": *v }))
    }

    /// Evaluation seeds shared by every stage that compares flights.
    pub fn eval_seeds(&self) -> Vec<u64> {
        (0..self.cfg.evaluation.episodes as u64).map(|i| self.tree.seed("eval", i)).collect()
    }

    pub fn train(&mut self, role: AgentRole) -> Result<StepOutcome> {
        let cfg = &self.cfg;
        let inputs = json!({
            "seed": cfg.seed,
            "arena": serde_json::to_value(cfg.training_arena()?)?,
            "train": cfg.train,
            "apf": role.shaped().then_some(&cfg.apf),
        });
        self.run_step(&format!("train-{}", role.name()), inputs, |me| {
            let arena = Arc::new(me.cfg.training_arena()?);
            let dir = Self::agent_dir(role);
            let seeds = me.tree.child(&format!("train-{}", role.name()));
            let (_, report) = ddpg::train(arena, &me.cfg.train, me.shaping(role), &seeds, Some(&me.path(&dir)), me.exec)?;
            let summary = json!({
                "episodes": report.episodes.len(),
                "total_steps": report.total_steps,
                "updates": report.updates,
                "dropped_transitions": report.dropped_transitions,
                "clamp_events": report.clamp_events,
                "final_rolling_success": report.final_rolling(me.cfg.train.rolling_window),
                "selected_episode": report.selected_episode,
                "selection": report.selection,
            });
            write_json(&me.path(&format!("{dir}/train_report.json")), &summary)?;
            write_csv(&me.path(&format!("{dir}/selection.csv")), &report.selection)?;
            Ok(Outputs::default()
                .report(format!("{dir}/train_log.csv"))
                .report(format!("{dir}/train_report.json"))
                .report(format!("{dir}/selection.csv"))
                .report(Self::actor_rel(role))
                .artifact(format!("{dir}/actor_final.uavw"))
                .artifact(format!("{dir}/critic_final.uavw")))
        })
    }

    pub fn train_compare(&mut self) -> Result<Vec<StepOutcome>> {
        let mut out = vec![self.train(AgentRole::ApfOn)?, self.train(AgentRole::ApfOff)?];
        let inputs = json!({
            "actors": [self.actor_hash(AgentRole::ApfOn)?, self.actor_hash(AgentRole::ApfOff)?],
            "arenas": self.arena_json()?,
            "apf": self.cfg.apf,
            "evaluation": self.cfg.evaluation,
            "seed": self.cfg.seed,
            "window": self.cfg.train.rolling_window,
        });
        out.push(self.run_step("train-compare", inputs, |me| {
            let (_, val) = me.arenas()?;
            let window = me.cfg.train.rolling_window;
            let seeds = me.eval_seeds();
            let mut logs = BTreeMap::new();
            for role in AgentRole::BOTH {
                logs.insert(role, read_train_log(&me.path(&format!("{}/train_log.csv", Self::agent_dir(role))))?);
            }
            let final_rolling = |e: &[EpisodeStat]| e.last().map_or(0.0, |l| l.rolling_success);
            let threshold = final_rolling(&logs[&AgentRole::ApfOff]);
            let mut rows = Vec::new();
            let mut flights = Vec::new();
            for role in AgentRole::BOTH {
                let actor = me.load_actor(role)?;
                let eval = evaluate(&val, &actor, me.shaping(role), &seeds, me.exec)?;
                let log = &logs[&role];
                let cause = |c: &str| eval.causes.get(c).copied().unwrap_or(0);
                rows.push(AgentRow {
                    agent: role,
                    episodes: log.len(),
                    train_steps: log.last().map_or(0, |l| l.total_steps),
                    final_rolling_success: final_rolling(log),
                    steps_to_threshold: steps_to_reach(log, threshold, window),
                    completion: eval.completion,
                    mean_steps: eval.mean_steps,
                    collisions: cause("collision"),
                    timeouts: cause("timeout"),
                    out_of_bounds: cause("out-of-bounds"),
                });
                flights.extend(eval.flights.into_iter().map(|f| (role, f)));
            }
            let report = TrainCompareReport {
                threshold,
                completion_gain_points: 100.0 * (rows[0].completion - rows[1].completion),
                rows,
            };
            write_json(&me.path("reports/train_compare.json"), &report)?;
            write_csv(&me.path("reports/train_compare.csv"), &report.rows)?;
            #[derive(Serialize)]
            struct FlightRow {
                agent: AgentRole,
                seed: u64,
                goal: usize,
                steps: u32,
                reward: f64,
                cause: crate::sim::TerminalCause,
            }
            let rows: Vec<FlightRow> = flights
                .into_iter()
                .map(|(agent, f)| FlightRow {
                    agent,
                    seed: f.seed,
                    goal: f.goal,
                    steps: f.steps,
                    reward: f.reward,
                    cause: f.cause,
                })
                .collect();
            write_csv(&me.path("reports/train_compare_flights.csv"), &rows)?;
            Ok(Outputs::default()
                .report("reports/train_compare.json")
                .report("reports/train_compare.csv")
                .report("reports/train_compare_flights.csv"))
        })?);
        Ok(out)
    }

    /// Validation-course states of the attack target flying as deployed.
    fn attack_states(&self, actor: &Actor, count: usize) -> Result<Vec<Observation>> {
        let (_, val) = self.arenas()?;
        let role = self.cfg.targets.attack;
        detectors::sample_states(&val, actor, self.shaping(role), &self.tree.child("attack-states"), count)
    }

    pub fn attack_sweep(&mut self) -> Result<StepOutcome> {
        let role = self.cfg.targets.attack;
        let inputs = json!({
            "actor": self.actor_hash(role)?,
            "arenas": self.arena_json()?,
            "apf": self.cfg.apf,
            "sweep": self.cfg.sweep,
            "seed": self.cfg.seed,
        });
        self.run_step("attack-sweep", inputs, |me| {
            let actor = me.load_actor(role)?;
            let states = me.attack_states(&actor, me.cfg.sweep.states)?;
            let cells: Vec<SweepCell> = attack::sweep(&actor, &states, &me.cfg.sweep.eps, &me.cfg.sweep.iterations, me.exec)?;
            write_csv(&me.path("reports/attack_sweep.csv"), &cells)?;
            write_json(&me.path("reports/attack_sweep.json"), &cells)?;
            Ok(Outputs::default()
                .report("reports/attack_sweep.csv")
                .report("reports/attack_sweep.json"))
        })
    }

    pub fn deflection_probe(&mut self) -> Result<StepOutcome> {
        let role = self.cfg.targets.attack;
        let inputs = json!({
            "actor": self.actor_hash(role)?,
            "arena": serde_json::to_value(self.cfg.training_arena()?)?,
            "probe": self.cfg.probe,
            "attack": self.cfg.attack,
        });
        self.run_step("deflection-probe", inputs, |me| {
            let actor = me.load_actor(role)?;
            let arena = me.cfg.training_arena()?;
            let p = &me.cfg.probe;
            let placements: Vec<Placement> = p
                .gaps
                .iter()
                .flat_map(|&gap| p.bearings_deg.iter().map(move |&bearing_deg| Placement { gap, bearing_deg }))
                .collect();
            let cells: Vec<ProbeCell> = attack::deflection_probe(&actor, &arena, &placements, p.goal_distance, &me.cfg.attack, me.exec)?;
            write_csv(&me.path("reports/deflection_probe.csv"), &cells)?;
            write_json(&me.path("reports/deflection_probe.json"), &cells)?;
            Ok(Outputs::default()
                .report("reports/deflection_probe.csv")
                .report("reports/deflection_probe.json"))
        })
    }

    pub fn campaign(&mut self) -> Result<StepOutcome> {
        let role = self.cfg.targets.attack;
        let inputs = json!({
            "actor": self.actor_hash(role)?,
            "arenas": self.arena_json()?,
            "attack": self.cfg.attack,
            "evaluation": self.cfg.evaluation,
            "seed": self.cfg.seed,
        });
        self.run_step("campaign", inputs, |me| {
            let actor = me.load_actor(role)?;
            let (_, val) = me.arenas()?;
            let report: CampaignReport = attack::campaign(&val, &actor, &me.cfg.attack, &me.eval_seeds(), &me.tree.child("campaign"), me.exec)?;
            write_json(&me.path("reports/campaign.json"), &report)?;
            #[derive(Serialize)]
            struct Row {
                leg: &'static str,
                seed: u64,
                steps: u32,
                attacked_steps: u32,
                cause: crate::sim::TerminalCause,
            }
            let mut rows = Vec::new();
            for (leg, eval) in [("clean", &report.clean), ("attacked", &report.attacked)] {
                rows.extend(eval.flights.iter().map(|f| Row {
                    leg,
                    seed: f.seed,
                    steps: f.steps,
                    attacked_steps: f.attacked_steps,
                    cause: f.cause,
                }));
            }
            write_csv(&me.path("reports/campaign.csv"), &rows)?;
            Ok(Outputs::default().report("reports/campaign.json").report("reports/campaign.csv"))
        })
    }

    fn explain_inputs(&self, role: AgentRole) -> Result<Value> {
        Ok(json!({
            "actor": self.actor_hash(role)?,
            "arenas": self.arena_json()?,
            "apf": self.cfg.apf,
            "shap": self.cfg.shap,
            "seed": self.cfg.seed,
        }))
    }

    /// Writes the background observations under `rel` and reads them back,
    /// so every later consumer sees the exact same values.
    fn background(&self, actor: &Actor, role: AgentRole, tag: &str, count: usize, rel: &str) -> Result<Vec<Observation>> {
        let (train, _) = self.arenas()?;
        let bg = detectors::sample_states(&train, actor, self.shaping(role), &self.tree.child(tag), count)?;
        write_observations(&self.path(rel), &bg, Some(crate::records::sha256_hex(&actor.weight_bytes())))?;
        read_observations(&self.path(rel))
    }

    pub fn shap_trace(&mut self) -> Result<StepOutcome> {
        let role = self.cfg.targets.explain;
        let inputs = self.explain_inputs(role)?;
        self.run_step("shap-trace", inputs, |me| {
            let actor = me.load_actor(role)?;
            let bg = me.background(&actor, role, "shap-background", me.cfg.shap.background, "shap/background.records")?;
            let cache = GruBackground::new(&actor, &bg)?;
            let (_, val) = me.arenas()?;
            let seed = me.tree.seed("eval", me.cfg.shap.trace_episode);
            let rows = episode_shap_trace(&actor, val.clone(), seed, me.shaping(role), &cache)?;
            write_csv(&me.path("reports/shap_trace.csv"), &rows)?;

            // full-image attributions for evenly spaced steps of the same flight
            let flights = detectors::record_flight(&val, &actor, me.shaping(role), seed)?;
            let n = me.cfg.shap.images.min(flights.len()).max(1);
            let picked: Vec<Observation> = (0..n).map(|i| flights[i * flights.len() / n].clone()).collect();
            let ex = Explainers::new(&actor, &bg)?;
            let lidar = actor.lidar();
            let mut images = Vec::new();
            for o in &picked {
                images.extend(shap_image(&ex.full(o)?.values, FRAMES, lidar.height, lidar.width));
            }
            let mut header = RecordHeader::new("shap-image", &[FRAMES, 2, lidar.height, lidar.width], picked.len());
            header.model_hash = Some(ex.model_hash().into());
            header.background_hash = Some(ex.background_hash().into());
            header.head = Some("yaw".into());
            write_records(&me.path("shap/images.records"), &header, &images)?;
            write_observations(&me.path("shap/states.records"), &picked, Some(ex.model_hash().into()))?;
            Ok(Outputs::default()
                .report("reports/shap_trace.csv")
                .report("shap/images.records")
                .report("shap/states.records")
                .artifact("shap/background.records"))
        })
    }

    /// Attributions of the states saved by the trace step, one CSV row per
    /// state: output, baseline, side terms, then every feature value.
    pub fn shap_frames(&mut self, gru: bool) -> Result<StepOutcome> {
        let role = self.cfg.targets.explain;
        let name = if gru { "gru" } else { "full" };
        let inputs = json!({
            "actor": self.actor_hash(role)?,
            "states": self.prerequisite("reproduce shap-trace", "shap/states.records")?,
            "background": self.prerequisite("reproduce shap-trace", "shap/background.records")?,
        });
        self.run_step(&format!("shap-{name}"), inputs, |me| {
            let actor = me.load_actor(role)?;
            let bg = read_observations(&me.path("shap/background.records"))?;
            let states = read_observations(&me.path("shap/states.records"))?;
            let ex = Explainers::new(&actor, &bg)?;
            let frames = me.exec.map(&states, |o| if gru { ex.gru(o) } else { ex.full(o) });
            let rel = format!("reports/shap_{name}.csv");
            let mut w = csv::WriterBuilder::new().flexible(true).from_path(me.path(&rel))?;
            for (i, f) in frames.into_iter().enumerate() {
                let f = f?;
                let mut row = vec![i.to_string(), f.output.to_string(), f.baseline.to_string()];
                row.extend(f.side.iter().chain(&f.values).map(f64::to_string));
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(Outputs::default().report(rel))
        })
    }

    fn detector_inputs(&self, role: AgentRole) -> Result<Value> {
        Ok(json!({
            "actor": self.actor_hash(role)?,
            "arenas": self.arena_json()?,
            "apf": self.cfg.apf,
            "detectors": self.cfg.detectors,
            "seed": self.cfg.seed,
        }))
    }

    fn detector_background(&self) -> Result<Vec<Observation>> {
        self.prerequisite("detect build", "detectors/background.records")?;
        read_observations(&self.path("detectors/background.records"))
    }

    fn dataset_rel(kind: DetectorKind) -> String {
        format!("detectors/datasets/{kind}.manifest.json")
    }

    fn detector_rel(kind: DetectorKind) -> String {
        format!("detectors/{kind}.uavw")
    }

    /// Builds the three training sets from training-course flights.
    pub fn detect_build(&mut self) -> Result<StepOutcome> {
        let role = self.cfg.targets.explain;
        let inputs = self.detector_inputs(role)?;
        self.run_step("detect-build", inputs, |me| {
            let actor = me.load_actor(role)?;
            let bg = me.background(&actor, role, "detector-background", me.cfg.detectors.background, "detectors/background.records")?;
            let ex = Explainers::new(&actor, &bg)?;
            let (train, _) = me.arenas()?;
            let sets = detectors::build_datasets(&ex, &train, me.shaping(role), &me.cfg.detectors, &me.tree.child("detector-data"), me.exec)?;
            let mut out = Outputs::default().artifact("detectors/background.records");
            for (kind, d) in &sets {
                d.save(&me.path("detectors/datasets"))?;
                out = out.report(Self::dataset_rel(*kind)).report(format!("detectors/datasets/{kind}.records"));
            }
            Ok(out)
        })
    }

    fn train_on(&self, data: &Dataset, tag: &str, stem: &str) -> Result<(Detector, TrainCurves)> {
        let (det, curves) = detectors::train_detector(data, &self.cfg.detectors, &self.tree.child(tag), self.exec)?;
        det.save(&self.path("detectors"), stem, json!({ "kind": "adam", "lr": self.cfg.detectors.fit(data.kind).lr }))?;
        write_json(&self.path(&format!("detectors/{stem}.curves.json")), &curves)?;
        Ok((det, curves))
    }

    pub fn detect_train(&mut self, kind: DetectorKind) -> Result<StepOutcome> {
        let rel = Self::dataset_rel(kind);
        let inputs = json!({
            "dataset": self.prerequisite("detect build", &rel)?,
            "detectors": self.cfg.detectors,
            "seed": self.cfg.seed,
        });
        self.run_step(&format!("detect-train-{kind}"), inputs, |me| {
            let data = Dataset::load(&me.path(&rel))?;
            me.train_on(&data, &format!("detector-{kind}"), kind.name())?;
            Ok(Outputs::default()
                .report(Self::detector_rel(kind))
                .report(format!("detectors/{kind}.curves.json"))
                .artifact(format!("detectors/{kind}.json")))
        })
    }

    /// Paired clean/attacked validation-course samples for every kind.
    pub fn detect_samples(&mut self) -> Result<StepOutcome> {
        let role = self.cfg.targets.explain;
        let mut inputs = self.detector_inputs(role)?;
        inputs["background"] = json!(self.prerequisite("detect build", "detectors/background.records")?);
        self.run_step("detect-samples", inputs, |me| {
            let actor = me.load_actor(role)?;
            let bg = me.detector_background()?;
            let ex = Explainers::new(&actor, &bg)?;
            let (_, val) = me.arenas()?;
            let samples = detectors::paired_samples(&ex, &val, me.shaping(role), &me.cfg.detectors, &me.tree.child("detector-eval"), me.exec)?;
            let mut out = Outputs::default();
            for (kind, d) in &samples.datasets {
                d.save(&me.path("detectors/eval"))?;
                out = out
                    .report(format!("detectors/eval/{kind}.manifest.json"))
                    .report(format!("detectors/eval/{kind}.records"));
            }
            write_csv(&me.path("detectors/eval/steps.csv"), &samples.refs)?;
            Ok(out.report("detectors/eval/steps.csv"))
        })
    }

    fn load_samples(&self, kind: DetectorKind) -> Result<(Dataset, Vec<SampleRef>)> {
        let rel = format!("detectors/eval/{kind}.manifest.json");
        self.prerequisite("detect eval", &rel)?;
        let data = Dataset::load(&self.path(&rel))?;
        let mut r = csv::Reader::from_path(self.path("detectors/eval/steps.csv"))?;
        let refs = r.deserialize().collect::<std::result::Result<Vec<SampleRef>, _>>()?;
        Ok((data, refs))
    }

    pub fn detect_eval(&mut self, kind: DetectorKind) -> Result<StepOutcome> {
        let mut outcomes = Vec::new();
        outcomes.push(self.detect_samples()?);
        let inputs = json!({
            "detector": self.prerequisite(&format!("detect train --kind {kind}"), &Self::detector_rel(kind))?,
            "samples": outcomes[0].report_hash,
        });
        self.run_step(&format!("detect-eval-{kind}"), inputs, |me| {
            let det = Detector::load(&me.path(&Self::detector_rel(kind)))?;
            let (data, refs) = me.load_samples(kind)?;
            let report = detectors::evaluate(&det, &data, &refs, me.exec)?;
            write_json(&me.path(&format!("reports/detector_eval_{kind}.json")), &report)?;
            report.write_csv(&me.path(&format!("reports/detector_eval_{kind}.csv")))?;
            Ok(Outputs::default()
                .report(format!("reports/detector_eval_{kind}.json"))
                .report(format!("reports/detector_eval_{kind}.csv")))
        })
    }

    /// LSTM detector trained on shuffled labels, scored on the true ones.
    pub fn detect_control(&mut self) -> Result<StepOutcome> {
        let rel = Self::dataset_rel(DetectorKind::Lstm);
        let samples = self.detect_samples()?;
        let inputs = json!({
            "dataset": self.prerequisite("detect build", &rel)?,
            "samples": samples.report_hash,
            "detectors": self.cfg.detectors,
            "seed": self.cfg.seed,
        });
        self.run_step("detect-control", inputs, |me| {
            let data = Dataset::load(&me.path(&rel))?;
            let shuffled = data.with_shuffled_labels(&mut me.tree.rng("shuffle-labels", 0));
            let (det, _) = me.train_on(&shuffled, "detector-control", CONTROL)?;
            let (eval, refs) = me.load_samples(DetectorKind::Lstm)?;
            let report = detectors::evaluate(&det, &eval, &refs, me.exec)?;
            write_json(&me.path(&format!("reports/detector_eval_{CONTROL}.json")), &report)?;
            Ok(Outputs::default()
                .report(format!("reports/detector_eval_{CONTROL}.json"))
                .report(format!("detectors/{CONTROL}.curves.json"))
                .artifact(format!("detectors/{CONTROL}.uavw")))
        })
    }

    pub fn detector_suite(&mut self) -> Result<Vec<StepOutcome>> {
        let mut out = vec![self.detect_build()?];
        for kind in DetectorKind::ALL {
            out.push(self.detect_train(kind)?);
        }
        for kind in DetectorKind::ALL {
            out.push(self.detect_eval(kind)?);
        }
        out.push(self.detect_control()?);
        let inputs = json!(out.iter().map(|o| o.report_hash.clone()).collect::<Vec<_>>());
        out.push(self.run_step("detector-suite", inputs, |me| {
            let mut rows = Vec::new();
            let names: Vec<String> = DetectorKind::ALL
                .iter()
                .map(|k| k.name().to_string())
                .chain([CONTROL.to_string()])
                .collect();
            for name in names {
                let curves: TrainCurves = read_json(&me.path(&format!("detectors/{name}.curves.json")))?;
                let eval: EvalReport = read_json(&me.path(&format!("reports/detector_eval_{name}.json")))?;
                rows.push(SuiteRow {
                    detector: name,
                    train_val_accuracy: curves.val_accuracy,
                    train_test_accuracy: curves.test_accuracy,
                    best_epoch: curves.best_epoch,
                    accuracy: eval.accuracy,
                    detection_rate: eval.detection_rate,
                    false_alarm_rate: eval.false_alarm_rate,
                    samples: eval.samples,
                });
            }
            let report = DetectorSuiteReport {
                eval_steps: me.cfg.detectors.eval_steps,
                rows,
            };
            write_json(&me.path("reports/detector_suite.json"), &report)?;
            write_csv(&me.path("reports/detector_suite.csv"), &report.rows)?;
            Ok(Outputs::default()
                .report("reports/detector_suite.json")
                .report("reports/detector_suite.csv"))
        })?);
        Ok(out)
    }

    /// Per-step timings. The report is wall-clock only, so it is recorded
    /// as an artifact but left out of the step's report hash.
    pub fn latency(&mut self) -> Result<StepOutcome> {
        let role = self.cfg.targets.explain;
        let mut inputs = self.detector_inputs(role)?;
        let mut dets = Vec::new();
        for kind in DetectorKind::ALL {
            dets.push(self.prerequisite(&format!("detect train --kind {kind}"), &Self::detector_rel(kind))?);
        }
        inputs["detector_weights"] = json!(dets);
        inputs["latency"] = json!(self.cfg.latency);
        self.force = true;
        let r = self.run_step("latency", inputs, |me| {
            let actor = me.load_actor(role)?;
            let bg = me.detector_background()?;
            let ex = Explainers::new(&actor, &bg)?;
            let dets = DetectorKind::ALL
                .iter()
                .map(|k| Detector::load(&me.path(&Self::detector_rel(*k))))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Detector> = dets.iter().collect();
            let report = detectors::latency_bench(&ex, &refs, &bg, me.cfg.latency.runs)?;
            write_json(&me.path("reports/latency.json"), &report)?;
            write_csv(&me.path("reports/latency.csv"), &report.stats)?;
            Ok(Outputs::default().artifact("reports/latency.json").artifact("reports/latency.csv"))
        });
        self.force = false;
        r
    }

    pub fn reproduce(&mut self, stage: Stage) -> Result<Vec<StepOutcome>> {
        Ok(match stage {
            Stage::TrainCompare => self.train_compare()?,
            Stage::AttackSweep => vec![self.attack_sweep()?],
            Stage::DeflectionProbe => vec![self.deflection_probe()?],
            Stage::Campaign => vec![self.campaign()?],
            Stage::ShapTrace => vec![self.shap_trace()?],
            Stage::DetectorSuite => self.detector_suite()?,
            Stage::Latency => vec![self.latency()?],
        })
    }
}

/// Loads paired evaluation samples written by a finished run.
pub fn load_eval_samples(root: &Path) -> Result<EvalSamples> {
    let mut datasets = BTreeMap::new();
    for kind in DetectorKind::ALL {
        datasets.insert(kind, Dataset::load(&root.join(format!("detectors/eval/{kind}.manifest.json")))?);
    }
    let mut r = csv::Reader::from_path(root.join("detectors/eval/steps.csv"))?;
    let refs = r.deserialize().collect::<std::result::Result<Vec<SampleRef>, _>>()?;
    Ok(EvalSamples { datasets, refs })
}
