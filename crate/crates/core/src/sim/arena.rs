use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// World-frame direction angle from `self` towards `other`.
    pub fn angle_to(self, other: Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn contains(&self, p: Point, margin: f64) -> bool {
        p.x >= self.min.x + margin && p.x <= self.max.x - margin && p.y >= self.min.y + margin && p.y <= self.max.y - margin
    }

    pub fn center(&self) -> Point {
        Point::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }
}

/// A vertical cylinder, seen from above.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Kinematics {
    pub dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub max_steps: u32,
    pub drone_radius: f64,
    pub goal_radius: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self {
            dt: 0.25,
            v_max: 2.0,
            omega_max: std::f64::consts::FRAC_PI_2,
            max_steps: 200,
            drone_radius: 0.3,
            goal_radius: 1.0,
        }
    }
}

/// Ray layout of the scanner and resolution of the rendered depth image.
/// Rays sit at the centres of `rays` equal azimuth slices of `fov_deg` and of
/// `beams` equal elevation slices of `vfov_deg`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    pub rays: usize,
    pub beams: usize,
    pub fov_deg: f64,
    pub vfov_deg: f64,
    pub max_range: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl LidarConfig {
    pub fn desk() -> Self {
        Self {
            rays: 128,
            beams: 16,
            fov_deg: 90.0,
            vfov_deg: 30.0,
            max_range: 10.0,
            width: 64,
            height: 32,
        }
    }

    /// 256×128 frames, 163,840 values per five-frame stack.
    pub fn full() -> Self {
        Self {
            rays: 512,
            beams: 64,
            width: 256,
            height: 128,
            ..Self::desk()
        }
    }

    /// Small enough to train on a single core in minutes.
    pub fn compact() -> Self {
        Self {
            rays: 64,
            beams: 8,
            width: 32,
            height: 8,
            ..Self::desk()
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Relative azimuth of ray `k`, radians, positive to the right.
    pub fn azimuth(&self, k: usize) -> f64 {
        let fov = self.fov_deg.to_radians();
        -fov / 2.0 + (k as f64 + 0.5) * fov / self.rays as f64
    }

    /// Elevation of beam `j`, radians, positive up; beam 0 is the highest.
    pub fn elevation(&self, j: usize) -> f64 {
        let vfov = self.vfov_deg.to_radians();
        vfov / 2.0 - (j as f64 + 0.5) * vfov / self.beams as f64
    }

    pub(crate) fn column_of(&self, azimuth: f64) -> usize {
        let fov = self.fov_deg.to_radians();
        let c = ((azimuth + fov / 2.0) / fov * self.width as f64).floor();
        (c.max(0.0) as usize).min(self.width - 1)
    }

    pub(crate) fn row_of(&self, elevation: f64) -> usize {
        let vfov = self.vfov_deg.to_radians();
        let r = ((vfov / 2.0 - elevation) / vfov * self.height as f64).floor();
        (r.max(0.0) as usize).min(self.height - 1)
    }

    fn validate(&self, issues: &mut Vec<String>) {
        if self.rays == 0 || self.beams == 0 || self.width == 0 || self.height == 0 {
            issues.push("lidar: rays, beams, width and height must be positive".into());
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            issues.push(format!("lidar.fov_deg must lie in (0, 180), got {}", self.fov_deg));
        }
        if !(self.vfov_deg > 0.0 && self.vfov_deg < 180.0) {
            issues.push(format!("lidar.vfov_deg must lie in (0, 180), got {}", self.vfov_deg));
        }
        if !(self.max_range > 0.0) {
            issues.push(format!("lidar.max_range must be positive, got {}", self.max_range));
        }
    }
}

/// Uniform perturbation of the start pose: lateral offset in metres and
/// heading offset in radians, each drawn from `[-x, x]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartJitter {
    pub lateral: f64,
    pub heading: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub name: String,
    pub bounds: Bounds,
    pub start: Point,
    pub goals: [Point; 2],
    pub obstacles: Vec<Column>,
    /// Downrange distances from the start, metres.
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub kinematics: Kinematics,
    #[serde(default)]
    pub lidar: LidarConfig,
    #[serde(default)]
    pub start_jitter: StartJitter,
}

impl Arena {
    /// 30 m × 20 m arena, goals 20 m downrange at ±5 m, four columns that
    /// block both straight-line routes, checkpoints every 4 m.
    pub fn reference() -> Self {
        Self {
            name: "reference".into(),
            bounds: Bounds {
                min: Point::new(0.0, 0.0),
                max: Point::new(30.0, 20.0),
            },
            start: Point::new(5.0, 10.0),
            goals: [Point::new(25.0, 5.0), Point::new(25.0, 15.0)],
            obstacles: [(11.0, 8.5), (11.0, 11.5), (18.0, 6.5), (18.0, 13.5)]
                .into_iter()
                .map(|(x, y)| Column {
                    center: Point::new(x, y),
                    radius: 0.5,
                })
                .collect(),
            checkpoints: vec![4.0, 8.0, 12.0, 16.0],
            kinematics: Kinematics::default(),
            lidar: LidarConfig::desk(),
            start_jitter: StartJitter::default(),
        }
    }

    /// Training course: the reference layout with a jittered start.
    pub fn training() -> Self {
        Self {
            name: "training".into(),
            start_jitter: StartJitter {
                lateral: 1.5,
                heading: 0.35,
            },
            ..Self::reference()
        }
    }

    /// Held-out course with a different column layout.
    pub fn validation() -> Self {
        Self {
            name: "validation".into(),
            obstacles: [(10.0, 10.0), (14.0, 7.9), (14.5, 13.0), (19.5, 6.2), (20.0, 11.5), (20.0, 14.5)]
                .into_iter()
                .map(|(x, y)| Column {
                    center: Point::new(x, y),
                    radius: 0.5,
                })
                .collect(),
            ..Self::training()
        }
    }

    pub fn with_lidar(mut self, lidar: LidarConfig) -> Self {
        self.lidar = lidar;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        let k = &self.kinematics;
        if !self.bounds.contains(self.start, 0.0) {
            issues.push("start lies outside the bounds".into());
        }
        for (i, g) in self.goals.iter().enumerate() {
            if !self.bounds.contains(*g, 0.0) {
                issues.push(format!("goals[{i}] lies outside the bounds"));
            }
        }
        for (i, c) in self.obstacles.iter().enumerate() {
            if !(c.radius > 0.0) {
                issues.push(format!("obstacles[{i}].radius must be positive"));
            }
            if c.center.distance(self.start) <= c.radius + k.drone_radius {
                issues.push(format!("obstacles[{i}] covers the start"));
            }
            for (j, g) in self.goals.iter().enumerate() {
                if c.center.distance(*g) <= c.radius {
                    issues.push(format!("obstacles[{i}] covers goals[{j}]"));
                }
            }
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) || self.checkpoints.iter().any(|c| *c <= 0.0) {
            issues.push("checkpoints must be positive and strictly increasing".into());
        }
        if !(k.dt > 0.0 && k.v_max > 0.0 && k.omega_max > 0.0 && k.max_steps > 0) {
            issues.push("kinematics: dt, v_max, omega_max and max_steps must be positive".into());
        }
        if !(k.goal_radius > 0.0 && k.drone_radius >= 0.0) {
            issues.push("kinematics: goal_radius must be positive and drone_radius non-negative".into());
        }
        self.lidar.validate(&mut issues);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArena(issues.join("; ")))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let arena: Arena = serde_json::from_str(text)?;
        arena.validate()?;
        Ok(arena)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        Arena::reference().validate().unwrap();
        Arena::training().validate().unwrap();
        Arena::validation().validate().unwrap();
    }

    #[test]
    fn covered_goal_is_rejected() {
        let mut arena = Arena::reference();
        arena.obstacles.push(Column {
            center: arena.goals[1],
            radius: 0.5,
        });
        let err = arena.validate().unwrap_err().to_string();
        assert!(err.contains("goals[1]"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let arena = Arena::validation();
        let text = serde_json::to_string(&arena).unwrap();
        assert_eq!(Arena::from_json(&text).unwrap(), arena);
    }
}
