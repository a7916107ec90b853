//! DDPG with prioritized replay. The actor maps a depth-image stack plus
//! bearing and distance to `(v, ω)`; the critic scores such pairs. Training
//! optionally shapes every action with the potential field before it reaches
//! the environment, while the replay buffer keeps the unshaped policy action.

mod agent;
mod nets;
mod noise;
mod replay;
mod train;

pub use agent::{soft_update, Agent, UpdateStats};
pub use nets::{Actor, ConvLayer, Critic, NetConfig, ACTION_DIMS};
pub(crate) use nets::write_pair;
pub use noise::OrnsteinUhlenbeck;
pub use replay::{importance_weight, PrioritizedReplay, Sample, SumTree, Transition};
pub use train::{rolling_success, steps_to_reach, train, EpisodeStat, SelectionPoint, TrainReport};

use serde::{Deserialize, Serialize};
use uavxai_nn::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    /// Target-network update rate λ.
    pub tau: f64,
    pub batch: usize,
    pub capacity: usize,
    /// Environment steps before the first update.
    pub warmup: usize,
    /// Environment steps between updates.
    pub update_every: usize,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub priority_eps: f64,
    pub noise_theta: f64,
    /// In normalised action units, where each component spans [−1, 1].
    pub noise_sigma: f64,
    /// Fraction of `noise_sigma` left at the final episode.
    pub noise_final: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub rolling_window: usize,
    /// Episodes between noise-free evaluations of the current actor on
    /// training-course seeds; the best one becomes the deployed actor.
    /// 0 deploys the last weights.
    pub select_every: usize,
    pub select_flights: usize,
    pub checkpoint_every: usize,
    /// Write every training step to `episodes.ndjson`.
    pub log_steps: bool,
    pub network: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            gamma: 0.99,
            tau: 0.005,
            batch: 32,
            capacity: 50_000,
            warmup: 1000,
            update_every: 2,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            priority_eps: 1e-3,
            noise_theta: 0.15,
            noise_sigma: 0.2,
            noise_final: 0.1,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            rolling_window: 10,
            select_every: 25,
            select_flights: 20,
            checkpoint_every: 100,
            log_steps: false,
            network: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn actor_adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.actor_lr)
    }

    pub fn critic_adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.critic_lr)
    }

    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, key: &str, what: &str| {
            if !ok {
                out.push(format!("{path}.{key}: {what}"));
            }
        };
        check(self.gamma > 0.0 && self.gamma < 1.0, "gamma", "must lie in (0, 1)");
        check(self.tau > 0.0 && self.tau <= 1.0, "tau", "must lie in (0, 1]");
        check(self.batch >= 1, "batch", "must be at least 1");
        check(self.batch <= self.capacity, "batch", "must not exceed capacity");
        check(self.warmup >= self.batch, "warmup", "must be at least the batch size");
        check(self.update_every >= 1, "update_every", "must be at least 1");
        check(self.alpha >= 0.0, "alpha", "must be non-negative");
        check(
            (0.0..=1.0).contains(&self.beta_start) && (0.0..=1.0).contains(&self.beta_end),
            "beta_start",
            "beta_start and beta_end must lie in [0, 1]",
        );
        check(self.priority_eps > 0.0, "priority_eps", "must be positive");
        check(self.noise_sigma >= 0.0, "noise_sigma", "must be non-negative");
        check(self.actor_lr > 0.0, "actor_lr", "must be positive");
        check(self.critic_lr > 0.0, "critic_lr", "must be positive");
        check(self.rolling_window >= 1, "rolling_window", "must be at least 1");
        check(self.select_every == 0 || self.select_flights >= 1, "select_flights", "must be at least 1 when selecting");
        check(self.network.gru_units >= 1, "network.gru_units", "must be at least 1");
        out
    }
}
