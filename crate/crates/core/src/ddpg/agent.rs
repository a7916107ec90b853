use rand::Rng;
use uavxai_nn::{Adam, Parametrized, Real, Tensor};

use super::nets::{Actor, Critic};
use super::replay::Transition;
use super::TrainConfig;
use crate::sim::LidarConfig;
use crate::sim::Kinematics;
use crate::{Exec, Result};

/// `target ← λ·online + (1 − λ)·target`, elementwise.
pub fn soft_update<F: Real, P: Parametrized<F> + ?Sized>(target: &mut P, online: &P, lambda: f64) {
    let lambda = F::of(lambda);
    let keep = F::one() - lambda;
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        for (a, &b) in t.data_mut().iter_mut().zip(o.data()) {
            *a = lambda * b + keep * *a;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    /// Weighted mean squared TD error over the kept transitions.
    pub critic_loss: f64,
    /// Mean Q of the current policy's actions.
    pub policy_q: f64,
    /// Per-transition TD errors, `None` where the transition was dropped.
    pub td_errors: Vec<Option<f64>>,
    /// False when every transition was dropped or a gradient step was skipped.
    pub finite: bool,
}

struct SampleGrads {
    delta: f64,
    policy_q: f64,
    critic: Vec<Tensor<f32>>,
    actor: Vec<Tensor<f32>>,
}

/// Online and target actor-critic pairs with their optimisers.
#[derive(Clone, Debug)]
pub struct Agent {
    pub actor: Actor,
    pub critic: Critic,
    pub actor_target: Actor,
    pub critic_target: Critic,
    actor_opt: Adam<f32>,
    critic_opt: Adam<f32>,
    gamma: f64,
    tau: f64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, lidar: &LidarConfig, kin: Kinematics, rng: &mut R) -> Result<Self> {
        let actor = Actor::new(&cfg.network, lidar, kin, rng)?;
        let critic = Critic::new(&cfg.network, lidar, kin, rng)?;
        Ok(Self::from_nets(cfg, actor, critic))
    }

    pub fn from_nets(cfg: &TrainConfig, actor: Actor, critic: Critic) -> Self {
        let actor_opt = Adam::new(cfg.actor_adam(), &actor.net().params());
        let critic_opt = Adam::new(cfg.critic_adam(), &critic.net().params());
        Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            gamma: cfg.gamma,
            tau: cfg.tau,
        }
    }

    /// `r + γ·Q'(s', μ'(s'))`, no bootstrap on terminal transitions.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        if t.terminal {
            return Ok(t.reward as f64);
        }
        let a = self.actor_target.normalized(&t.next)?;
        Ok(t.reward as f64 + self.gamma * self.critic_target.q(&t.next, a)? as f64)
    }

    fn sample_grads(&self, t: &Transition, weight: f64, k: f64) -> Result<Option<SampleGrads>> {
        let target = self.td_target(t)?;
        let stack = self.critic.stack::<f32>(&t.state)?;
        let cnet = self.critic.net();
        let tape = cnet.forward(&stack, &self.critic.side(&t.state, t.action))?;
        let delta = target - tape.output().data()[0] as f64;
        if !delta.is_finite() {
            log::warn!("non-finite TD error, transition dropped");
            return Ok(None);
        }
        let mut critic = cnet.zero_grads();
        let up = Tensor::vector(vec![(-2.0 * weight * delta / k) as f32]);
        cnet.backward(&tape, &up, &mut critic)?;

        // ∂Q/∂a through the critic head only: the trunk embedding does not
        // depend on the action.
        let anet = self.actor.net();
        let side = self.actor.positional(&t.state).map(|v| v as f32);
        let atape = anet.forward(&stack, &side)?;
        let a = atape.output().data();
        let head = cnet.forward_head(tape.embedding(), &self.critic.side(&t.state, [a[0], a[1]]))?;
        let policy_q = head.output().data()[0] as f64;
        let g = cnet.head().input_gradient(&head, &Tensor::vector(vec![1.0]))?;
        let dq = &g.data()[g.len() - 2..];
        let mut actor = anet.zero_grads();
        let up = Tensor::vector(vec![-dq[0] / k as f32, -dq[1] / k as f32]);
        anet.backward(&atape, &up, &mut actor)?;
        Ok(Some(SampleGrads {
            delta,
            policy_q,
            critic,
            actor,
        }))
    }

    /// One critic and one actor step on a weighted minibatch, followed by
    /// soft target updates. Per-sample gradients are computed under `exec`
    /// and summed in batch order.
    pub fn td_update(&mut self, batch: &[&Transition], weights: &[f64], exec: Exec) -> Result<UpdateStats> {
        let k = batch.len() as f64;
        let per = exec.map_range(batch.len(), |j| self.sample_grads(batch[j], weights[j], k));
        let mut critic = self.critic.net().zero_grads();
        let mut actor = self.actor.net().zero_grads();
        let mut stats = UpdateStats::default();
        let mut kept = 0usize;
        for (j, r) in per.into_iter().enumerate() {
            match r? {
                Some(s) => {
                    kept += 1;
                    stats.critic_loss += weights[j] * s.delta * s.delta;
                    stats.policy_q += s.policy_q;
                    stats.td_errors.push(Some(s.delta));
                    for (a, b) in critic.iter_mut().zip(&s.critic) {
                        a.add_assign(b);
                    }
                    for (a, b) in actor.iter_mut().zip(&s.actor) {
                        a.add_assign(b);
                    }
                }
                None => stats.td_errors.push(None),
            }
        }
        if kept == 0 {
            return Ok(stats);
        }
        stats.critic_loss /= kept as f64;
        stats.policy_q /= kept as f64;
        let c_ok = self.critic_opt.step(&mut self.critic.net_mut().params_mut(), &critic);
        let a_ok = self.actor_opt.step(&mut self.actor.net_mut().params_mut(), &actor);
        stats.finite = c_ok && a_ok && stats.critic_loss.is_finite();
        soft_update(self.critic_target.net_mut(), self.critic.net(), self.tau);
        soft_update(self.actor_target.net_mut(), self.actor.net(), self.tau);
        Ok(stats)
    }

    /// Critic-only step, for tests that isolate the TD recursion.
    pub fn critic_step(&mut self, batch: &[&Transition], weights: &[f64]) -> Result<Vec<f64>> {
        let k = batch.len() as f64;
        let mut grads = self.critic.net().zero_grads();
        let mut deltas = Vec::with_capacity(batch.len());
        for (t, &w) in batch.iter().zip(weights) {
            let target = self.td_target(t)?;
            let cnet = self.critic.net();
            let tape = cnet.forward(&self.critic.stack::<f32>(&t.state)?, &self.critic.side(&t.state, t.action))?;
            let delta = target - tape.output().data()[0] as f64;
            cnet.backward(&tape, &Tensor::vector(vec![(-2.0 * w * delta / k) as f32]), &mut grads)?;
            deltas.push(delta);
        }
        self.critic_opt.step(&mut self.critic.net_mut().params_mut(), &grads);
        Ok(deltas)
    }

    pub fn optimizer_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "adam",
            "actor_steps": self.actor_opt.steps(),
            "critic_steps": self.critic_opt.steps(),
            "gamma": self.gamma,
            "tau": self.tau,
        })
    }
}
