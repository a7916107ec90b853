//! Artificial potential field. An attractive field pulls the drone towards
//! the goal (forward speed and yaw), each column within range pushes its yaw
//! away. Forces are scaled by gains, added to the policy action and clamped.

use serde::{Deserialize, Serialize};

use crate::sim::{wrap_angle, Action, Column, Kinematics, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApfConfig {
    pub enabled: bool,
    /// m/s of forward speed per unit of force.
    pub k_v: f64,
    /// rad/s of yaw rate per unit of force.
    pub k_omega: f64,
    /// Columns farther than this from the drone (surface distance) exert nothing.
    pub repulse_range: f64,
    /// Attractive field switches shape inside this goal distance.
    pub near_goal: f64,
    /// Floor on the goal distance inside the attractive field.
    pub d_min: f64,
}

impl Default for ApfConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            k_v: 0.1,
            k_omega: 0.2,
            repulse_range: 3.0,
            near_goal: 5.0,
            d_min: 0.1,
        }
    }
}

/// Raw field output, before gains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceCommand {
    pub f_vx: f64,
    pub f_omega: f64,
}

impl std::ops::Add for ForceCommand {
    type Output = ForceCommand;

    fn add(self, rhs: Self) -> Self {
        Self {
            f_vx: self.f_vx + rhs.f_vx,
            f_omega: self.f_omega + rhs.f_omega,
        }
    }
}

/// Where a column sits relative to the drone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleRelation {
    /// Bearing to the column centre, radians, positive to the right.
    pub theta: f64,
    /// Distance to the column surface, metres.
    pub distance: f64,
}

impl ObstacleRelation {
    pub fn of(position: Point, heading: f64, column: &Column) -> Self {
        Self {
            theta: wrap_angle(position.angle_to(column.center) - heading),
            distance: (position.distance(column.center) - column.radius).max(0.0),
        }
    }
}

/// Goal attraction for bearing `theta` and distance `d`.
pub fn attractive_force(theta: f64, d: f64, cfg: &ApfConfig) -> ForceCommand {
    use std::f64::consts::FRAC_PI_2;
    let d = d.max(cfg.d_min);
    if d < cfg.near_goal {
        ForceCommand {
            f_vx: 20.0 * theta.cos() / (d * d),
            f_omega: (2.0 * theta / 5.0).tan(),
        }
    } else {
        ForceCommand {
            f_vx: 2.0 * theta.cos() / d,
            f_omega: if theta.abs() > FRAC_PI_2 { (theta / 3.0).tan().powi(3) } else { 0.0 },
        }
    }
}

/// Yaw push away from one column. `dead_ahead_sign` settles the direction
/// for a column exactly on the nose: +1 steers left like the right-hand
/// branch, −1 steers right.
pub fn repulsive_force(rel: ObstacleRelation, dead_ahead_sign: f64, cfg: &ApfConfig) -> ForceCommand {
    use std::f64::consts::FRAC_PI_2;
    let t = rel.theta;
    let f_omega = if rel.distance >= cfg.repulse_range {
        0.0
    } else if t > 0.0 && t < FRAC_PI_2 {
        -(3.0 - 3.0 * (t / 2.0).tan())
    } else if t < 0.0 && t > -FRAC_PI_2 {
        -(-3.0 - 3.0 * (t / 2.0).tan())
    } else if t == 0.0 {
        -3.0 * dead_ahead_sign
    } else {
        0.0
    };
    ForceCommand { f_vx: 0.0, f_omega }
}

pub fn total_force(
    position: Point,
    heading: f64,
    goal: Point,
    obstacles: &[Column],
    dead_ahead_sign: f64,
    cfg: &ApfConfig,
) -> ForceCommand {
    let theta = wrap_angle(position.angle_to(goal) - heading);
    let attract = attractive_force(theta, position.distance(goal), cfg);
    obstacles
        .iter()
        .map(|c| repulsive_force(ObstacleRelation::of(position, heading, c), dead_ahead_sign, cfg))
        .fold(attract, |acc, f| acc + f)
}

/// Result of shaping a policy action with a force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shaped {
    pub action: Action,
    /// Velocity contributions after gains, before clamping.
    pub delta: Action,
    pub clamped: bool,
}

pub fn shape(action: Action, force: ForceCommand, cfg: &ApfConfig, k: &Kinematics) -> Shaped {
    let delta = Action {
        v: cfg.k_v * force.f_vx,
        omega: cfg.k_omega * force.f_omega,
    };
    let raw = Action {
        v: action.v + delta.v,
        omega: action.omega + delta.omega,
    };
    let clamped_action = raw.clamp(k);
    let clamped = clamped_action != raw;
    if clamped {
        log::trace!("potential field action clamped: {raw:?} -> {clamped_action:?}");
    }
    Shaped {
        action: clamped_action,
        delta,
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: ApfConfig = ApfConfig {
        enabled: true,
        k_v: 0.1,
        k_omega: 0.2,
        repulse_range: 3.0,
        near_goal: 5.0,
        d_min: 0.1,
    };

    fn rel(theta: f64, distance: f64) -> ObstacleRelation {
        ObstacleRelation { theta, distance }
    }

    #[test]
    fn attractive_reference_values() {
        assert_eq!(attractive_force(0.0, 2.0, &CFG), ForceCommand { f_vx: 5.0, f_omega: 0.0 });
        let far = attractive_force(0.0, 10.0, &CFG);
        assert!((far.f_vx - 0.2).abs() < 1e-15 && far.f_omega == 0.0);
        // Long range: yaw only for goals behind.
        assert_eq!(attractive_force(1.5, 10.0, &CFG).f_omega, 0.0);
        let behind = attractive_force(2.0, 10.0, &CFG);
        assert!((behind.f_omega - (2.0f64 / 3.0).tan().powi(3)).abs() < 1e-15);
    }

    #[test]
    fn attractive_distance_floor() {
        assert_eq!(attractive_force(0.0, 0.0, &CFG), attractive_force(0.0, 0.1, &CFG));
        assert!((attractive_force(0.0, 0.0, &CFG).f_vx - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn attractive_step_at_five_metres() {
        let inside = attractive_force(0.0, 5.0 - 1e-9, &CFG).f_vx;
        let outside = attractive_force(0.0, 5.0, &CFG).f_vx;
        assert!((inside - 0.8).abs() < 1e-6 && (outside - 0.4).abs() < 1e-12);
    }

    #[test]
    fn repulsive_reference_values() {
        assert_eq!(repulsive_force(rel(0.5, 4.0), 1.0, &CFG).f_omega, 0.0);
        let f = repulsive_force(rel(0.5, 2.0), 1.0, &CFG).f_omega;
        assert!((f + 2.234).abs() < 1e-3, "{f}");
        assert!((f + (3.0 - 3.0 * 0.25f64.tan())).abs() < 1e-15);
        assert_eq!(repulsive_force(rel(0.5, 2.0), 1.0, &CFG).f_vx, 0.0);
    }

    #[test]
    fn dead_ahead_follows_episode_sign() {
        assert_eq!(repulsive_force(rel(0.0, 1.0), 1.0, &CFG).f_omega, -3.0);
        assert_eq!(repulsive_force(rel(0.0, 1.0), -1.0, &CFG).f_omega, 3.0);
    }

    #[test]
    fn shaping_clamps_into_bounds() {
        let k = Kinematics::default();
        let s = shape(
            Action { v: 1.9, omega: 1.5 },
            ForceCommand { f_vx: 5.0, f_omega: 3.0 },
            &CFG,
            &k,
        );
        assert!(s.clamped);
        assert_eq!(s.action, Action { v: 2.0, omega: k.omega_max });
        assert!((s.delta.v - 0.5).abs() < 1e-15 && (s.delta.omega - 0.6).abs() < 1e-15);
    }
}
