//! Deterministic 2D arena: yaw-mode drone kinematics, ray-cast LiDAR rendered
//! into depth images, checkpoints and the shaped reward.
//!
//! World frame: `x` points downrange, `y` to the right, so a positive heading
//! or bearing means "to the right" and a positive yaw rate turns right.

mod arena;
mod episode;
mod lidar;
mod log;

pub use arena::{Arena, Bounds, Column, Kinematics, LidarConfig, Point, StartJitter};
pub use episode::{checkpoint_reward, Action, DroneState, Episode, Observation, StepOutcome, TerminalCause, FRAMES};
pub use lidar::{cast_ray, depth_image, lidar_scan, render, DepthImage};
pub use log::{EpisodeLog, StepRecord};

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::wrap_angle;
    use std::f64::consts::PI;

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }
}
