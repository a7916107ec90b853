//! Gradient-sign attacks on the actor's depth input. The attacker pushes the
//! yaw output away from the clean decision; bearing and distance are never
//! touched.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use uavxai_nn::{Branched, Real, Tensor};

use crate::ddpg::Actor;
use crate::runner::{fly, EvalSummary, Tamper};
use crate::seed::SeedTree;
use crate::sim::{Action, Arena, Episode, Observation, Point};
use crate::xai::YAW;
use crate::{Error, Exec, Result};

/// Deflections of at least this fraction of ω_max count as a successful attack.
pub const SUCCESS_FRACTION: f64 = 0.33;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Per-pixel budget in 1/255 steps of the normalised image.
    pub eps: f64,
    /// 1 is plain FGSM.
    pub iterations: usize,
    /// Chance per step that a burst starts during a campaign.
    pub onset: f64,
    /// Steps per burst.
    pub duration: u32,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            eps: 1.0,
            iterations: 20,
            onset: 0.1,
            duration: 5,
        }
    }
}

impl AttackConfig {
    pub fn budget(&self) -> f32 {
        (self.eps / 255.0) as f32
    }

    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eps >= 0.0) {
            out.push(format!("{path}.eps: must be non-negative, got {}", self.eps));
        }
        if self.iterations < 1 {
            out.push(format!("{path}.iterations: must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.onset) {
            out.push(format!("{path}.onset: must lie in [0, 1], got {}", self.onset));
        }
        if self.duration < 1 {
            out.push(format!("{path}.duration: must be at least 1"));
        }
        out
    }
}

/// Yaw (rad/s) and its gradient with respect to the stack.
pub fn yaw_gradient<F: Real>(net: &Branched<F>, dims: &[usize], stack: &[F], side: &[F], omega_max: f64) -> Result<(f64, Vec<F>)> {
    let tape = net.forward(&Tensor::new(dims.to_vec(), stack.to_vec())?, side)?;
    let mut up = Tensor::zeros(&[2]);
    up.data_mut()[YAW] = F::of(omega_max);
    let (g, _) = net.input_gradient(&tape, &up)?;
    Ok((omega_max * tape.output().data()[YAW].f64(), g.into_data()))
}

/// BIM on a raw stack: `iterations` signed steps of `budget / iterations`,
/// each followed by projection onto the budget ball and [0, 1]. The first step
/// moves the yaw away from the clean decision's sign (towards +ω when the
/// clean yaw is zero); later steps follow the squared-deviation gradient.
pub fn bim_stack<F: Real>(
    net: &Branched<F>,
    dims: &[usize],
    clean: &[F],
    side: &[F],
    omega_max: f64,
    budget: F,
    iterations: usize,
) -> Result<Vec<F>> {
    let mut x = clean.to_vec();
    if budget == F::zero() {
        return Ok(x);
    }
    let step = budget / F::of(iterations as f64);
    let mut clean_yaw = None;
    for _ in 0..iterations {
        let (yaw, g) = yaw_gradient(net, dims, &x, side, omega_max)?;
        let reference = *clean_yaw.get_or_insert(yaw);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attack gradient".into()));
        }
        let dev = yaw - reference;
        let dir = if dev != 0.0 {
            dev.signum()
        } else if reference > 0.0 {
            -1.0
        } else {
            1.0
        };
        for ((xi, &ci), &gi) in x.iter_mut().zip(clean).zip(&g) {
            let s = F::of(dir) * gi;
            let moved = if s > F::zero() {
                *xi + step
            } else if s < F::zero() {
                *xi - step
            } else {
                *xi
            };
            *xi = moved.max(ci - budget).min(ci + budget).max(F::zero()).min(F::one());
        }
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub perturbed: Observation,
    pub clean: Action,
    pub attacked: Action,
    /// |Δω| in degrees per second.
    pub deflection_deg: f64,
    pub success: bool,
}

pub fn is_success(deflection_rad: f64, omega_max: f64) -> bool {
    deflection_rad.abs() >= SUCCESS_FRACTION * omega_max
}

pub fn bim(actor: &Actor, obs: &Observation, eps: f64, iterations: usize) -> Result<Observation> {
    let side = actor.positional(obs).map(|v| v as f32);
    let stack = obs.stack();
    let x = bim_stack(
        actor.net(),
        &actor.stack_dims(),
        &stack,
        &side,
        actor.kinematics().omega_max,
        (eps / 255.0) as f32,
        iterations,
    )?;
    Ok(obs.with_stack(&x))
}

pub fn fgsm(actor: &Actor, obs: &Observation, eps: f64) -> Result<Observation> {
    bim(actor, obs, eps, 1)
}

pub fn attack(actor: &Actor, obs: &Observation, eps: f64, iterations: usize) -> Result<AttackResult> {
    let perturbed = bim(actor, obs, eps, iterations)?;
    let clean = actor.act(obs)?;
    let attacked = actor.act(&perturbed)?;
    let d = (attacked.omega - clean.omega).abs();
    Ok(AttackResult {
        perturbed,
        clean,
        attacked,
        deflection_deg: d.to_degrees(),
        success: is_success(d, actor.kinematics().omega_max),
    })
}

/// One probe placement: the drone hovers `gap` metres from a lone
/// column dead ahead, with the goal `goal_distance` metres away at `bearing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub gap: f64,
    pub bearing_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeCell {
    pub gap: f64,
    pub bearing_deg: f64,
    pub clean_yaw_deg: f64,
    pub attacked_yaw_deg: f64,
    pub deflection_deg: f64,
    pub success: bool,
}

pub const PROBE_GAPS: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
pub const PROBE_BEARINGS: [f64; 7] = [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0];

pub fn probe_grid() -> Vec<Placement> {
    PROBE_GAPS
        .iter()
        .flat_map(|&gap| PROBE_BEARINGS.iter().map(move |&bearing_deg| Placement { gap, bearing_deg }))
        .collect()
}

/// Observation of a probe placement in an otherwise empty copy of `arena`.
pub fn probe_observation(arena: &Arena, p: Placement, goal_distance: f64) -> Observation {
    let drone = Point::new(arena.start.x, arena.bounds.center().y);
    let radius = arena.obstacles.first().map_or(0.5, |c| c.radius);
    let b = p.bearing_deg.to_radians();
    let goal = Point::new(drone.x + goal_distance * b.cos(), drone.y + goal_distance * b.sin());
    let probe = Arena {
        obstacles: vec![crate::sim::Column {
            center: Point::new(drone.x + p.gap + radius, drone.y),
            radius,
        }],
        goals: [goal, goal],
        start_jitter: Default::default(),
        ..arena.clone()
    };
    Episode::place(Arc::new(probe), drone, 0.0, 0, 1.0).observation().clone()
}

pub fn deflection_probe(
    actor: &Actor,
    arena: &Arena,
    placements: &[Placement],
    goal_distance: f64,
    cfg: &AttackConfig,
    exec: Exec,
) -> Result<Vec<ProbeCell>> {
    exec.map(placements, |&p| {
        let obs = probe_observation(arena, p, goal_distance);
        let r = attack(actor, &obs, cfg.eps, cfg.iterations)?;
        Ok(ProbeCell {
            gap: p.gap,
            bearing_deg: p.bearing_deg,
            clean_yaw_deg: r.clean.omega.to_degrees(),
            attacked_yaw_deg: r.attacked.omega.to_degrees(),
            deflection_deg: r.deflection_deg,
            success: r.success,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub eps: f64,
    pub iterations: usize,
    pub success_rate: f64,
    pub mean_deflection_deg: f64,
}

/// Attack success rate over `states` for every (ε, iterations) pair.
pub fn sweep(actor: &Actor, states: &[Observation], eps: &[f64], iterations: &[usize], exec: Exec) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    for &e in eps {
        for &it in iterations {
            let rs = exec.map(states, |o| attack(actor, o, e, it));
            let rs = rs.into_iter().collect::<Result<Vec<_>>>()?;
            let n = rs.len().max(1) as f64;
            cells.push(SweepCell {
                eps: e,
                iterations: it,
                success_rate: rs.iter().filter(|r| r.success).count() as f64 / n,
                mean_deflection_deg: rs.iter().map(|r| r.deflection_deg).sum::<f64>() / n,
            });
        }
    }
    Ok(cells)
}

/// Random-onset bursts: each step outside a burst starts one with
/// probability `onset`; a burst perturbs `duration` consecutive steps.
pub struct Bursts<'a, R> {
    actor: &'a Actor,
    cfg: AttackConfig,
    rng: R,
    left: u32,
}

impl<'a, R: Rng> Bursts<'a, R> {
    pub fn new(actor: &'a Actor, cfg: AttackConfig, rng: R) -> Self {
        Self { actor, cfg, rng, left: 0 }
    }
}

impl<R: Rng> Tamper for Bursts<'_, R> {
    fn tamper(&mut self, _: u32, obs: &Observation) -> Result<Option<Observation>> {
        if self.left == 0 && self.rng.random_bool(self.cfg.onset) {
            self.left = self.cfg.duration;
        }
        if self.left == 0 {
            return Ok(None);
        }
        self.left -= 1;
        Ok(Some(bim(self.actor, obs, self.cfg.eps, self.cfg.iterations)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: AttackConfig,
    pub clean: EvalSummary,
    pub attacked: EvalSummary,
    /// Clean minus attacked completion, percentage points.
    pub drop_points: f64,
}

/// Clean and attacked flights from the same seeds, potential field off.
pub fn campaign(arena: &Arc<Arena>, actor: &Actor, cfg: &AttackConfig, seeds: &[u64], tree: &SeedTree, exec: Exec) -> Result<CampaignReport> {
    let clean = exec.map(seeds, |&s| fly(arena.clone(), s, actor, None, &mut crate::runner::Clean, None));
    let attacked = exec.map(seeds, |&s| {
        let mut bursts = Bursts::new(actor, *cfg, tree.rng("bursts", s));
        fly(arena.clone(), s, actor, None, &mut bursts, None)
    });
    let clean = EvalSummary::from_flights(clean.into_iter().collect::<Result<_>>()?);
    let attacked = EvalSummary::from_flights(attacked.into_iter().collect::<Result<_>>()?);
    Ok(CampaignReport {
        config: *cfg,
        drop_points: 100.0 * (clean.completion - attacked.completion),
        clean,
        attacked,
    })
}
