//! Rolling out a frozen actor: single flights with optional potential-field
//! shaping, input tampering and step logging, and seeded evaluation batches.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::apf::{self, ApfConfig};
use crate::ddpg::Actor;
use crate::sim::{Action, Arena, Episode, Observation, StepRecord, TerminalCause};
use crate::{Exec, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightSummary {
    pub seed: u64,
    pub goal: usize,
    pub steps: u32,
    pub reward: f64,
    pub cause: TerminalCause,
    pub attacked_steps: u32,
}

impl FlightSummary {
    pub fn success(&self) -> bool {
        self.cause == TerminalCause::Success
    }
}

/// Decides, per step, whether to replace the observation the actor sees.
pub trait Tamper {
    fn tamper(&mut self, step: u32, obs: &Observation) -> Result<Option<Observation>>;
}

/// Leaves every observation untouched.
pub struct Clean;

impl Tamper for Clean {
    fn tamper(&mut self, _: u32, _: &Observation) -> Result<Option<Observation>> {
        Ok(None)
    }
}

/// Flies one episode. Steps are appended to `log` (tagged with `episode`)
/// when given.
pub fn fly(
    arena: Arc<Arena>,
    seed: u64,
    actor: &Actor,
    shaping: Option<&ApfConfig>,
    tamper: &mut dyn Tamper,
    mut log: Option<(&mut Vec<StepRecord>, u64)>,
) -> Result<FlightSummary> {
    let shaping = shaping.filter(|a| a.enabled);
    let kin = arena.kinematics;
    let mut episode = Episode::reset(arena.clone(), seed);
    let mut reward = 0.0;
    let mut attacked_steps = 0;
    loop {
        let seen = tamper.tamper(episode.steps(), episode.observation())?;
        let attacked = seen.is_some();
        attacked_steps += attacked as u32;
        let policy = actor.act(seen.as_ref().unwrap_or(episode.observation()))?;
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
                let shaped = apf::shape(policy, force, a, &kin);
                (shaped.action, shaped.delta, shaped.clamped)
            }
            None => (policy, Action::default(), false),
        };
        let outcome = episode.step(flown)?;
        reward += outcome.reward;
        if let Some((records, id)) = log.as_mut() {
            let s = episode.state();
            records.push(StepRecord {
                episode: *id,
                step: episode.steps(),
                x: s.position.x,
                y: s.position.y,
                heading: s.heading,
                policy_v: policy.v,
                policy_omega: policy.omega,
                apf_v: delta.v,
                apf_omega: delta.omega,
                apf_clamped: clamped,
                v: flown.v,
                omega: flown.omega,
                reward: outcome.reward,
                cause: outcome.cause,
                checkpoint: outcome.checkpoint,
                attacked,
            });
        }
        if outcome.terminal() {
            break;
        }
    }
    Ok(FlightSummary {
        seed,
        goal: episode.goal_index(),
        steps: episode.steps(),
        reward,
        cause: episode.cause(),
        attacked_steps,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub successes: usize,
    pub completion: f64,
    pub mean_steps: f64,
    pub causes: BTreeMap<String, usize>,
    pub flights: Vec<FlightSummary>,
}

impl EvalSummary {
    pub fn from_flights(flights: Vec<FlightSummary>) -> Self {
        let episodes = flights.len();
        let successes = flights.iter().filter(|f| f.success()).count();
        let mut causes = BTreeMap::new();
        for f in &flights {
            let key = serde_json::to_value(f.cause)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            *causes.entry(key).or_insert(0) += 1;
        }
        Self {
            episodes,
            successes,
            completion: if episodes == 0 { 0.0 } else { successes as f64 / episodes as f64 },
            mean_steps: flights.iter().map(|f| f.steps as f64).sum::<f64>() / episodes.max(1) as f64,
            causes,
            flights,
        }
    }
}

/// Clean flights from each seed, spread over `exec`.
pub fn evaluate(arena: &Arc<Arena>, actor: &Actor, shaping: Option<&ApfConfig>, seeds: &[u64], exec: Exec) -> Result<EvalSummary> {
    let flights = exec.map(seeds, |&s| fly(arena.clone(), s, actor, shaping, &mut Clean, None));
    Ok(EvalSummary::from_flights(flights.into_iter().collect::<Result<_>>()?))
}
