use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::deep::AttributionFrame;
use super::split::{gru_layer_shap, GruBackground};
use crate::apf::ApfConfig;
use crate::ddpg::Actor;
use crate::runner::{fly, Tamper};
use crate::sim::{Arena, Observation};
use crate::Result;

/// Per-step yaw attribution split into the three inputs that matter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u32,
    pub x: f64,
    pub y: f64,
    /// Sum over the 48 image-derived GRU values.
    pub image: f64,
    pub bearing: f64,
    pub distance: f64,
    /// Yaw rate the policy asked for, rad/s.
    pub policy_yaw: f64,
    /// Yaw rate flown after shaping, rad/s.
    pub yaw: f64,
}

struct Recorder<'a> {
    actor: &'a Actor,
    cache: &'a GruBackground,
    frames: Vec<AttributionFrame>,
}

impl Tamper for Recorder<'_> {
    fn tamper(&mut self, _: u32, obs: &Observation) -> Result<Option<Observation>> {
        self.frames.push(gru_layer_shap(self.actor, obs, self.cache)?);
        Ok(None)
    }
}

/// Flies the seeded episode and attributes every decision on the way.
pub fn episode_shap_trace(
    actor: &Actor,
    arena: Arc<Arena>,
    seed: u64,
    shaping: Option<&ApfConfig>,
    cache: &GruBackground,
) -> Result<Vec<TraceRow>> {
    let mut rec = Recorder {
        actor,
        cache,
        frames: Vec::new(),
    };
    let mut log = Vec::new();
    fly(arena, seed, actor, shaping, &mut rec, Some((&mut log, seed)))?;
    Ok(rec
        .frames
        .iter()
        .zip(&log)
        .map(|(f, s)| TraceRow {
            step: s.step,
            x: s.x,
            y: s.y,
            image: f.values.iter().sum(),
            bearing: f.side[0],
            distance: f.side[1],
            policy_yaw: s.policy_omega,
            yaw: s.omega,
        })
        .collect())
}
