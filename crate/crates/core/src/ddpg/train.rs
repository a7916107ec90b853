use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::nets::Actor;
use super::noise::OrnsteinUhlenbeck;
use super::replay::{PrioritizedReplay, Transition};
use super::TrainConfig;
use crate::apf::{self, ApfConfig};
use crate::seed::SeedTree;
use crate::runner::evaluate;
use crate::sim::{Action, Arena, Episode, EpisodeLog, StepRecord, TerminalCause};
use crate::{Error, Exec, Result};

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    pub steps: u32,
    pub reward: f64,
    pub success: bool,
    pub rolling_success: f64,
    /// Environment steps since training began, including this episode.
    pub total_steps: u64,
    pub cause: TerminalCause,
}

/// Noise-free completion of the actor after `episode` episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionPoint {
    pub episode: usize,
    pub completion: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeStat>,
    pub selection: Vec<SelectionPoint>,
    /// Episode count behind the deployed actor; `None` deploys the last
    /// weights.
    pub selected_episode: Option<usize>,
    pub total_steps: u64,
    pub updates: u64,
    pub dropped_transitions: u64,
    pub clamp_events: u64,
}

impl TrainReport {
    pub fn final_rolling(&self, window: usize) -> f64 {
        let s: Vec<bool> = self.episodes.iter().map(|e| e.success).collect();
        rolling_success(&s, window).last().copied().unwrap_or(0.0)
    }
}

/// Success rate over the trailing `window` episodes (fewer at the start).
pub fn rolling_success(successes: &[bool], window: usize) -> Vec<f64> {
    (0..successes.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &successes[lo..=i];
            w.iter().filter(|&&s| s).count() as f64 / w.len() as f64
        })
        .collect()
}

/// Environment steps consumed when the trailing-`window` success rate first
/// reaches `threshold` over a full window.
pub fn steps_to_reach(episodes: &[EpisodeStat], threshold: f64, window: usize) -> Option<u64> {
    let s: Vec<bool> = episodes.iter().map(|e| e.success).collect();
    rolling_success(&s, window)
        .iter()
        .enumerate()
        .find(|&(i, &r)| i + 1 >= window && r >= threshold)
        .map(|(i, _)| episodes[i].total_steps)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Runs the full training loop. With `out`, writes `train_log.csv`,
/// checkpoints every `checkpoint_every` episodes, the final nets and the
/// deployed actor (`actor.uavw`). The returned agent holds the deployed
/// actor.
pub fn train(
    arena: Arc<Arena>,
    cfg: &TrainConfig,
    shaping: Option<&ApfConfig>,
    seeds: &SeedTree,
    out: Option<&Path>,
    exec: Exec,
) -> Result<(Agent, TrainReport)> {
    let issues = cfg.issues("train");
    if !issues.is_empty() {
        return Err(Error::InvalidConfig(issues));
    }
    let shaping = shaping.filter(|a| a.enabled);
    let kin = arena.kinematics;
    let mut agent = Agent::new(cfg, &arena.lidar, kin, &mut seeds.rng("init", 0))?;
    let mut replay = PrioritizedReplay::new(cfg.capacity, cfg.alpha, cfg.warmup);
    let mut noise = OrnsteinUhlenbeck::<2>::new(cfg.noise_theta, cfg.noise_sigma);
    let mut noise_rng = seeds.rng("noise", 0);
    let mut replay_rng = seeds.rng("replay", 0);

    let mut csv = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir.join("checkpoints"))?;
            Some(csv::Writer::from_path(dir.join("train_log.csv"))?)
        }
        None => None,
    };
    let mut steps_log = match out {
        Some(dir) if cfg.log_steps => Some(EpisodeLog::new(std::io::BufWriter::new(File::create(
            dir.join("episodes.ndjson"),
        )?))),
        _ => None,
    };

    let mut report = TrainReport::default();
    let mut successes = Vec::with_capacity(cfg.episodes);
    let mut bad_batches = 0usize;
    let select_seeds: Vec<u64> = (0..cfg.select_flights as u64).map(|i| seeds.seed("select", i)).collect();
    let mut best: Option<(f64, Actor)> = None;
    let span = (cfg.episodes.max(2) - 1) as f64;
    for ep in 0..cfg.episodes {
        let progress = ep as f64 / span;
        noise.set_sigma(cfg.noise_sigma * lerp(1.0, cfg.noise_final, progress));
        noise.reset();
        let beta = lerp(cfg.beta_start, cfg.beta_end, progress);
        let mut episode = Episode::reset(arena.clone(), seeds.seed("episode", ep as u64));
        let mut reward = 0.0;
        loop {
            let state = episode.observation().clone();
            let pure = agent.actor.normalized(&state)?;
            let n = noise.sample(&mut noise_rng);
            let policy = [
                (pure[0] as f64 + n[0]).clamp(-1.0, 1.0),
                (pure[1] as f64 + n[1]).clamp(-1.0, 1.0),
            ];
            let policy_action = Action::from_normalized(policy, &kin);
            let (flown, delta, clamped) = match shaping {
                Some(a) => {
                    let s = episode.state();
                    let force = apf::total_force(
                        s.position,
                        s.heading,
                        episode.goal(),
                        &arena.obstacles,
                        episode.dead_ahead_sign(),
                        a,
                    );
                    let shaped = apf::shape(policy_action, force, a, &kin);
                    (shaped.action, shaped.delta, shaped.clamped)
                }
                None => (policy_action, Action::default(), false),
            };
            assert!(flown.within(&kin), "flown action {flown:?} escaped the action bounds");
            report.clamp_events += clamped as u64;
            let outcome = episode.step(flown)?;
            report.total_steps += 1;
            reward += outcome.reward;
            if let Some(log) = steps_log.as_mut() {
                let s = episode.state();
                log.append(&StepRecord {
                    episode: ep as u64,
                    step: episode.steps(),
                    x: s.position.x,
                    y: s.position.y,
                    heading: s.heading,
                    policy_v: policy_action.v,
                    policy_omega: policy_action.omega,
                    apf_v: delta.v,
                    apf_omega: delta.omega,
                    apf_clamped: clamped,
                    v: flown.v,
                    omega: flown.omega,
                    reward: outcome.reward,
                    cause: outcome.cause,
                    checkpoint: outcome.checkpoint,
                    attacked: false,
                })?;
            }
            replay.push(Transition {
                state,
                action: [policy[0] as f32, policy[1] as f32],
                reward: outcome.reward as f32,
                next: outcome.observation.clone(),
                terminal: outcome.terminal(),
            });

            if replay.ready() && report.total_steps % cfg.update_every as u64 == 0 {
                let sample = replay.sample(cfg.batch, beta, &mut replay_rng)?;
                let batch: Vec<&Transition> = sample.indices.iter().map(|&i| replay.get(i)).collect();
                let stats = agent.td_update(&batch, &sample.weights, exec)?;
                report.updates += 1;
                let mut idx = Vec::with_capacity(batch.len());
                let mut pri = Vec::with_capacity(batch.len());
                for (&i, d) in sample.indices.iter().zip(&stats.td_errors) {
                    match d {
                        Some(d) => {
                            idx.push(i);
                            pri.push(d.abs() + cfg.priority_eps);
                        }
                        None => report.dropped_transitions += 1,
                    }
                }
                replay.update_priorities(&idx, &pri);
                if stats.finite {
                    bad_batches = 0;
                } else {
                    bad_batches += 1;
                    if bad_batches >= 3 {
                        if let Some(dir) = out {
                            save_agent(&agent, &dir.join("checkpoints"), &format!("diverged_ep{ep}"))?;
                        }
                        return Err(Error::Diverged {
                            episode: ep,
                            batches: bad_batches,
                        });
                    }
                }
            }
            if outcome.terminal() {
                break;
            }
        }

        let success = episode.cause() == TerminalCause::Success;
        successes.push(success);
        let stat = EpisodeStat {
            episode: ep,
            steps: episode.steps(),
            reward,
            success,
            rolling_success: *rolling_success(&successes, cfg.rolling_window).last().unwrap(),
            total_steps: report.total_steps,
            cause: episode.cause(),
        };
        log::debug!(
            "episode {ep}: {:?} after {} steps, reward {reward:.2}, rolling {:.2}",
            stat.cause,
            stat.steps,
            stat.rolling_success
        );
        if let Some(w) = csv.as_mut() {
            w.serialize(&stat)?;
            w.flush()?;
        }
        report.episodes.push(stat);
        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0 {
                save_agent(&agent, &dir.join("checkpoints"), &format!("ep{:05}", ep + 1))?;
            }
        }
        if cfg.select_every > 0 && (ep + 1) % cfg.select_every == 0 {
            let completion = evaluate(&arena, &agent.actor, shaping, &select_seeds, exec)?.completion;
            log::info!("episode {}: noise-free completion {completion:.2}", ep + 1);
            report.selection.push(SelectionPoint { episode: ep + 1, completion });
            // ties go to the later, longer-trained actor
            if best.as_ref().is_none_or(|(c, _)| completion >= *c) {
                best = Some((completion, agent.actor.clone()));
                report.selected_episode = Some(ep + 1);
            }
        }
    }
    if let Some(log) = steps_log {
        use std::io::Write;
        log.into_inner().flush()?;
    }
    if let Some(dir) = out {
        save_agent(&agent, dir, "final")?;
    }
    if let Some((_, actor)) = best {
        agent.actor = actor;
    }
    if let Some(dir) = out {
        agent.actor.save(dir, "actor", agent.optimizer_json())?;
    }
    Ok((agent, report))
}

fn save_agent(agent: &Agent, dir: &Path, tag: &str) -> Result<()> {
    let opt = agent.optimizer_json();
    agent.actor.save(dir, &format!("actor_{tag}"), opt.clone())?;
    agent.critic.save(dir, &format!("critic_{tag}"), opt)
}
