use serde::{Deserialize, Serialize};

use super::arena::{Arena, LidarConfig, Point};

/// Horizontal distance from `origin` along world angle `angle` to the first
/// wall or column surface. `None` only when nothing lies ahead, which cannot
/// happen from inside the bounds.
pub fn cast_ray(arena: &Arena, origin: Point, angle: f64) -> Option<f64> {
    let (dy, dx) = angle.sin_cos();
    let b = &arena.bounds;
    let mut best = f64::INFINITY;
    let mut consider = |t: f64| {
        if t > 0.0 && t < best {
            best = t;
        }
    };
    if dx > 0.0 {
        consider((b.max.x - origin.x) / dx);
    } else if dx < 0.0 {
        consider((b.min.x - origin.x) / dx);
    }
    if dy > 0.0 {
        consider((b.max.y - origin.y) / dy);
    } else if dy < 0.0 {
        consider((b.min.y - origin.y) / dy);
    }
    for c in &arena.obstacles {
        let (ox, oy) = (c.center.x - origin.x, c.center.y - origin.y);
        let along = ox * dx + oy * dy;
        let disc = along * along - (ox * ox + oy * oy - c.radius * c.radius);
        if disc >= 0.0 {
            consider(along - disc.sqrt());
        }
    }
    best.is_finite().then_some(best)
}

/// Sensor-frame returns (`x` forward, `y` right, `z` up) of every ray whose
/// 3D range is within the scanner's maximum range.
pub fn lidar_scan(arena: &Arena, position: Point, heading: f64) -> Vec<[f64; 3]> {
    let l = &arena.lidar;
    let mut cloud = Vec::new();
    for k in 0..l.rays {
        let az = l.azimuth(k);
        let Some(r) = cast_ray(arena, position, heading + az) else {
            continue;
        };
        let (sa, ca) = az.sin_cos();
        for j in 0..l.beams {
            let el = l.elevation(j);
            if r / el.cos() <= l.max_range {
                cloud.push([r * ca, r * sa, r * el.tan()]);
            }
        }
    }
    cloud
}

/// Normalised depth image, row-major, row 0 at the top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }
}

/// Equirectangular projection of a point cloud. Each pixel holds the closest
/// return in its azimuth/elevation bin over the maximum range. Bins that some
/// ray passes through but that hold no return read 1.0 (nothing within
/// range); bins no ray passes through are filled from the nearest sampled bin
/// on the same scanline, and scanlines no beam passes through from the
/// nearest sampled scanline.
pub fn depth_image(cloud: &[[f64; 3]], lidar: &LidarConfig) -> DepthImage {
    let (w, h) = (lidar.width, lidar.height);
    let mut cols = vec![false; w];
    for k in 0..lidar.rays {
        cols[lidar.column_of(lidar.azimuth(k))] = true;
    }
    let mut rows = vec![false; h];
    for j in 0..lidar.beams {
        rows[lidar.row_of(lidar.elevation(j))] = true;
    }

    let mut best = vec![f64::INFINITY; w * h];
    for p in cloud {
        let flat = p[0].hypot(p[1]);
        let col = lidar.column_of(p[1].atan2(p[0]));
        let row = lidar.row_of(p[2].atan2(flat));
        let d = flat.hypot(p[2]);
        let slot = &mut best[row * w + col];
        if d < *slot {
            *slot = d;
        }
    }

    let value = |d: f64| (d.min(lidar.max_range) / lidar.max_range) as f32;
    let col_src = nearest_sampled(&cols);
    let row_src = nearest_sampled(&rows);
    let mut data = vec![1.0f32; w * h];
    for r in 0..h {
        let Some(sr) = row_src[r] else { continue };
        for c in 0..w {
            let Some(sc) = col_src[c] else { continue };
            let d = best[sr * w + sc];
            if d.is_finite() {
                data[r * w + c] = value(d);
            }
        }
    }
    DepthImage { width: w, height: h, data }
}

/// For each slot, the nearest sampled slot (ties go to the lower index).
fn nearest_sampled(sampled: &[bool]) -> Vec<Option<usize>> {
    (0..sampled.len())
        .map(|i| {
            (0..sampled.len())
                .filter(|&j| sampled[j])
                .min_by_key(|&j| (i.abs_diff(j), j))
        })
        .collect()
}

pub fn render(arena: &Arena, position: Point, heading: f64) -> DepthImage {
    depth_image(&lidar_scan(arena, position, heading), &arena.lidar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Bounds, Column};

    fn open_arena(lidar: LidarConfig) -> Arena {
        Arena {
            obstacles: vec![],
            bounds: Bounds {
                min: Point::new(0.0, 0.0),
                max: Point::new(100.0, 100.0),
            },
            start: Point::new(50.0, 50.0),
            goals: [Point::new(60.0, 50.0), Point::new(60.0, 55.0)],
            lidar,
            ..Arena::reference()
        }
    }

    #[test]
    fn wall_three_metres_ahead() {
        let arena = Arena::reference();
        let r = cast_ray(&arena, Point::new(27.0, 10.0), 0.0).unwrap();
        assert!((r - 3.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn open_space_gives_no_returns_and_blank_image() {
        let arena = open_arena(LidarConfig::desk());
        let cloud = lidar_scan(&arena, arena.start, 0.3);
        assert!(cloud.is_empty());
        let img = depth_image(&cloud, &arena.lidar);
        assert!(img.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn column_dead_ahead_hits_its_surface() {
        let mut arena = open_arena(LidarConfig {
            rays: 129,
            ..LidarConfig::desk()
        });
        arena.obstacles.push(Column {
            center: Point::new(56.0, 50.0),
            radius: 0.5,
        });
        let cloud = lidar_scan(&arena, arena.start, 0.0);
        let central = cloud
            .iter()
            .filter(|p| p[1].abs() < 1e-12)
            .map(|p| p[0])
            .collect::<Vec<_>>();
        assert!(!central.is_empty());
        for x in central {
            assert!((x - 5.5).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn sparse_single_return_spreads_along_scanline() {
        let lidar = LidarConfig {
            rays: 4,
            beams: 1,
            width: 16,
            height: 1,
            ..LidarConfig::desk()
        };
        let az = lidar.azimuth(1);
        let cloud = [[5.0 * az.cos(), 5.0 * az.sin(), 0.0]];
        let img = depth_image(&cloud, &lidar);
        let col = lidar.column_of(az);
        assert_eq!(img.get(0, col), 0.5);
        // Unsampled neighbours copy the return; the next sampled bin does not.
        assert_eq!(img.get(0, col - 1), 0.5);
        assert_eq!(img.get(0, col + 1), 0.5);
        assert_eq!(img.get(0, lidar.column_of(lidar.azimuth(2))), 1.0);
    }
}
