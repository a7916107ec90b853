use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arena::{Arena, Kinematics, Point};
use super::lidar::{render, DepthImage};
use super::wrap_angle;
use crate::{Error, Result};

/// Depth frames per observation.
pub const FRAMES: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub omega: f64,
}

impl Action {
    pub fn clamp(self, k: &Kinematics) -> Self {
        Self {
            v: self.v.clamp(0.0, k.v_max),
            omega: self.omega.clamp(-k.omega_max, k.omega_max),
        }
    }

    pub fn within(&self, k: &Kinematics) -> bool {
        (0.0..=k.v_max).contains(&self.v) && (-k.omega_max..=k.omega_max).contains(&self.omega)
    }

    /// Maps both components onto [−1, 1].
    pub fn normalized(&self, k: &Kinematics) -> [f64; 2] {
        [2.0 * self.v / k.v_max - 1.0, self.omega / k.omega_max]
    }

    pub fn from_normalized(n: [f64; 2], k: &Kinematics) -> Self {
        Self {
            v: (n[0] + 1.0) / 2.0 * k.v_max,
            omega: n[1] * k.omega_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Point,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
}

/// Frames are shared between consecutive observations, so cloning is cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Oldest first.
    pub frames: Vec<Arc<DepthImage>>,
    /// Radians to the active goal, positive to the right.
    pub bearing: f64,
    pub distance: f64,
}

impl Observation {
    pub fn newest(&self) -> &DepthImage {
        self.frames.last().expect("observation has frames")
    }

    /// All frames concatenated, oldest first.
    pub fn stack(&self) -> Vec<f32> {
        self.frames.iter().flat_map(|f| f.data.iter().copied()).collect()
    }

    /// Same positional inputs, different frames.
    pub fn with_stack(&self, stack: &[f32]) -> Observation {
        let first = &self.frames[0];
        let n = first.width * first.height;
        Observation {
            frames: stack
                .chunks(n)
                .map(|c| {
                    Arc::new(DepthImage {
                        width: first.width,
                        height: first.height,
                        data: c.to_vec(),
                    })
                })
                .collect(),
            bearing: self.bearing,
            distance: self.distance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalCause {
    Running,
    Success,
    Collision,
    OutOfBounds,
    Timeout,
}

impl TerminalCause {
    pub fn is_terminal(self) -> bool {
        self != TerminalCause::Running
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub cause: TerminalCause,
    /// 1-based index of the checkpoint first crossed on this step.
    pub checkpoint: Option<usize>,
}

impl StepOutcome {
    pub fn terminal(&self) -> bool {
        self.cause.is_terminal()
    }
}

pub const SUCCESS_REWARD: f64 = 5.0;
pub const DEAD_REWARD: f64 = -2.0;

/// One flight through an arena. Owns the mutable drone state; the arena is
/// shared.
#[derive(Clone, Debug)]
pub struct Episode {
    arena: Arc<Arena>,
    state: DroneState,
    goal: usize,
    steps: u32,
    crossed: Vec<bool>,
    observation: Observation,
    cause: TerminalCause,
    dead_ahead_sign: f64,
}

impl Episode {
    /// Drone at the (jittered) start facing the arena centre; one of the two
    /// goals picked uniformly from `seed`.
    pub fn reset(arena: Arc<Arena>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal = usize::from(rng.random_bool(0.5));
        let dead_ahead_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let j = arena.start_jitter;
        let lateral = if j.lateral > 0.0 { rng.random_range(-j.lateral..=j.lateral) } else { 0.0 };
        let turn = if j.heading > 0.0 { rng.random_range(-j.heading..=j.heading) } else { 0.0 };
        let position = Point::new(arena.start.x, arena.start.y + lateral);
        let heading = wrap_angle(position.angle_to(arena.bounds.center()) + turn);
        Self::place(arena, position, heading, goal, dead_ahead_sign)
    }

    /// Drone hovering at an arbitrary pose; every frame shows that pose.
    pub fn place(arena: Arc<Arena>, position: Point, heading: f64, goal: usize, dead_ahead_sign: f64) -> Self {
        let frame = Arc::new(render(&arena, position, heading));
        let goal_at = arena.goals[goal];
        let observation = Observation {
            frames: vec![frame; FRAMES],
            bearing: wrap_angle(position.angle_to(goal_at) - heading),
            distance: position.distance(goal_at),
        };
        Self {
            crossed: vec![false; arena.checkpoints.len()],
            state: DroneState {
                position,
                heading: wrap_angle(heading),
                v: 0.0,
                omega: 0.0,
            },
            arena,
            goal,
            steps: 0,
            observation,
            cause: TerminalCause::Running,
            dead_ahead_sign,
        }
    }

    pub fn arena(&self) -> &Arc<Arena> {
        &self.arena
    }

    pub fn state(&self) -> &DroneState {
        &self.state
    }

    pub fn goal_index(&self) -> usize {
        self.goal
    }

    pub fn goal(&self) -> Point {
        self.arena.goals[self.goal]
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn cause(&self) -> TerminalCause {
        self.cause
    }

    /// ±1, drawn at reset; which way a dead-ahead obstacle pushes the drone.
    pub fn dead_ahead_sign(&self) -> f64 {
        self.dead_ahead_sign
    }

    /// Advances one Δt. Out-of-range actions are clamped.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.cause.is_terminal() {
            return Err(Error::EpisodeOver);
        }
        let k = self.arena.kinematics;
        let a = action.clamp(&k);
        let prev = self.state.position;
        let prev_distance = prev.distance(self.goal());

        let heading = wrap_angle(self.state.heading + a.omega * k.dt);
        let position = Point::new(
            prev.x + a.v * k.dt * heading.cos(),
            prev.y + a.v * k.dt * heading.sin(),
        );
        self.state = DroneState {
            position,
            heading,
            v: a.v,
            omega: a.omega,
        };
        self.steps += 1;

        let distance = position.distance(self.goal());
        let collided = self
            .arena
            .obstacles
            .iter()
            .any(|c| c.center.distance(position) < c.radius + k.drone_radius);
        let checkpoint = self.cross_checkpoint(prev.x, position.x);
        let (cause, reward) = if collided {
            (TerminalCause::Collision, DEAD_REWARD)
        } else if !self.arena.bounds.contains(position, k.drone_radius) {
            (TerminalCause::OutOfBounds, DEAD_REWARD)
        } else if distance <= k.goal_radius {
            (TerminalCause::Success, SUCCESS_REWARD)
        } else if self.steps >= k.max_steps {
            (TerminalCause::Timeout, DEAD_REWARD)
        } else if let Some(c) = checkpoint {
            (TerminalCause::Running, checkpoint_reward(c, self.crossed.len()))
        } else {
            (TerminalCause::Running, prev_distance - distance)
        };
        self.cause = cause;

        let frame = Arc::new(render(&self.arena, position, heading));
        let mut frames = self.observation.frames[1..].to_vec();
        frames.push(frame);
        self.observation = Observation {
            frames,
            bearing: wrap_angle(position.angle_to(self.goal()) - heading),
            distance,
        };
        Ok(StepOutcome {
            observation: self.observation.clone(),
            reward,
            cause,
            checkpoint,
        })
    }

    fn cross_checkpoint(&mut self, from_x: f64, to_x: f64) -> Option<usize> {
        let start = self.arena.start.x;
        for (i, c) in self.arena.checkpoints.iter().enumerate() {
            let line = start + c;
            if !self.crossed[i] && from_x < line && to_x >= line {
                self.crossed[i] = true;
                return Some(i + 1);
            }
        }
        None
    }
}

/// Bonus for the first crossing of checkpoint `c` (1-based) of `n`.
pub fn checkpoint_reward(c: usize, n: usize) -> f64 {
    2.0 * (1.0 + c as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_one_of_four() {
        assert_eq!(checkpoint_reward(1, 4), 2.5);
    }

    #[test]
    fn normalized_round_trip() {
        let k = Kinematics::default();
        let a = Action { v: 0.5, omega: -0.7 };
        let b = Action::from_normalized(a.normalized(&k), &k);
        assert!((a.v - b.v).abs() < 1e-12 && (a.omega - b.omega).abs() < 1e-12);
        assert_eq!(Action::from_normalized([0.0, 0.0], &k), Action { v: 1.0, omega: 0.0 });
    }
}
