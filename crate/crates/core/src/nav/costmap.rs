use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::grid::{Cell, GridGeometry, OccupancyGrid};
use crate::kinematics::Pose2D;
use crate::worldsim::LidarScan;

/// Cost of a sensed obstacle cell.
pub const LETHAL: u8 = 255;
/// Cost of a cell adjacent (distance 0) to an obstacle; inflation decays from here.
pub const INFLATED_MAX: f64 = 253.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostmapConfig {
    /// Cells closer than this to an obstacle are lethal (m); 0 marks only
    /// the sensed cells.
    pub lethal_radius: f64,
    /// Cost decays to zero at this distance (m); defaults to the footprint
    /// half-diagonal.
    pub inflation_radius: f64,
}

impl Default for CostmapConfig {
    fn default() -> Self {
        Self {
            lethal_radius: 0.0,
            inflation_radius: 0.36,
        }
    }
}

impl CostmapConfig {
    /// Keeps a point-robot plan clear of the rotating footprint: the lethal
    /// core covers the half-diagonal plus a cell of discretisation slack.
    pub fn footprint_safe() -> Self {
        Self {
            lethal_radius: 0.45,
            inflation_radius: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Costmap {
    pub geometry: GridGeometry,
    pub inflation_radius: f64,
    #[serde(default)]
    pub lethal_radius: f64,
    /// `0..=254` traversal cost, or [`LETHAL`].
    pub costs: Vec<u8>,
}

impl Costmap {
    pub fn empty(geometry: GridGeometry, inflation_radius: f64) -> Self {
        Self {
            geometry,
            inflation_radius,
            lethal_radius: 0.0,
            costs: vec![0; geometry.len()],
        }
    }

    pub fn with_lethal_radius(mut self, radius: f64) -> Self {
        self.lethal_radius = radius;
        self
    }

    pub fn cost(&self, cx: i64, cy: i64) -> Option<u8> {
        self.geometry
            .in_bounds(cx, cy)
            .then(|| self.costs[self.geometry.index(cx, cy)])
    }

    pub fn is_lethal(&self, cx: i64, cy: i64) -> bool {
        self.cost(cx, cy) == Some(LETHAL)
    }

    pub fn lethal_count(&self) -> usize {
        self.costs.iter().filter(|c| **c == LETHAL).count()
    }

    /// Marks the given cells lethal (skipping `protect`) and inflates around them.
    pub fn add_obstacles<I>(&mut self, cells: I, protect: Option<(i64, i64)>)
    where
        I: IntoIterator<Item = (i64, i64)>,
    {
        let g = self.geometry;
        let mut fresh = Vec::new();
        for (cx, cy) in cells {
            if !g.in_bounds(cx, cy) || Some((cx, cy)) == protect {
                continue;
            }
            let i = g.index(cx, cy);
            if self.costs[i] != LETHAL {
                self.costs[i] = LETHAL;
                fresh.push((cx, cy));
            }
        }
        let radius = self.inflation_radius.max(self.lethal_radius);
        if radius <= 0.0 {
            return;
        }
        let reach = (radius / g.resolution).ceil() as i64;
        for (ox, oy) in fresh {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (cx, cy) = (ox + dx, oy + dy);
                    if !g.in_bounds(cx, cy) {
                        continue;
                    }
                    let d = (dx as f64).hypot(dy as f64) * g.resolution;
                    if d >= radius {
                        continue;
                    }
                    let i = g.index(cx, cy);
                    if self.costs[i] == LETHAL {
                        continue;
                    }
                    if d < self.lethal_radius {
                        self.costs[i] = LETHAL;
                        continue;
                    }
                    let c = (INFLATED_MAX * (1.0 - d / radius)) as u8;
                    if c > self.costs[i] {
                        self.costs[i] = c;
                    }
                }
            }
        }
    }

    /// Adds every occupied cell of a same-placement grid as an obstacle.
    pub fn add_grid_obstacles(&mut self, grid: &OccupancyGrid, protect: Option<(i64, i64)>) {
        let g = self.geometry;
        let cells: Vec<_> = grid
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Occupied)
            .map(|(i, _)| g.coords(i))
            .collect();
        self.add_obstacles(cells, protect);
    }
}

/// Cells containing the beam endpoints that hit something.
pub fn scan_endpoints(scan: &LidarScan, pose: &Pose2D, geometry: &GridGeometry) -> BTreeSet<(i64, i64)> {
    // push each endpoint half a cell past the surface so it lands inside the obstacle
    let nudge = 0.5 * geometry.resolution;
    scan.ranges
        .iter()
        .enumerate()
        .filter(|(_, r)| **r < scan.max_range)
        .map(|(i, r)| {
            let a = pose.yaw + scan.beam_angle(i);
            let d = r + nudge;
            geometry.world_to_cell(pose.x + d * a.cos(), pose.y + d * a.sin())
        })
        .collect()
}

/// Local costmap from one scan: endpoints lethal, linear inflation decay.
pub fn build_costmap(scan: &LidarScan, pose: &Pose2D, geometry: &GridGeometry, config: &CostmapConfig) -> Costmap {
    let mut map = Costmap::empty(*geometry, config.inflation_radius).with_lethal_radius(config.lethal_radius);
    let robot = geometry.world_to_cell(pose.x, pose.y);
    map.add_obstacles(scan_endpoints(scan, pose, geometry), Some(robot));
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn geom() -> GridGeometry {
        GridGeometry {
            width: 80,
            height: 80,
            resolution: 0.05,
            origin_x: -2.0,
            origin_y: -2.0,
        }
    }

    fn scan_with(hits: &[(usize, f64)]) -> LidarScan {
        let mut ranges = vec![8.0; 360];
        for (i, r) in hits {
            ranges[*i] = *r;
        }
        LidarScan {
            angle_min: 0.0,
            angle_increment: 2.0 * PI / 360.0,
            max_range: 8.0,
            ranges,
        }
    }

    #[test]
    fn empty_scan_zero_costmap() {
        let m = build_costmap(&scan_with(&[]), &Pose2D::default(), &geom(), &CostmapConfig::default());
        assert!(m.costs.iter().all(|c| *c == 0));
    }

    // brute-force distance transform around a single hit
    fn check_against_distance_transform(cfg: CostmapConfig) {
        let g = geom();
        let m = build_costmap(&scan_with(&[(0, 1.0)]), &Pose2D::default(), &g, &cfg);
        let hit = g.world_to_cell(1.0 + 0.5 * g.resolution, 0.0);
        for i in 0..g.len() {
            let (cx, cy) = g.coords(i);
            let d = ((cx - hit.0) as f64).hypot((cy - hit.1) as f64) * g.resolution;
            let expect = if (cx, cy) == hit || d < cfg.lethal_radius {
                LETHAL
            } else if d < cfg.inflation_radius {
                (253.0 * (1.0 - d / cfg.inflation_radius)) as u8
            } else {
                0
            };
            assert_eq!(m.costs[i], expect, "cell {cx},{cy}");
        }
    }

    #[test]
    fn single_obstacle_matches_distance_transform() {
        check_against_distance_transform(CostmapConfig::default());
        let m = build_costmap(
            &scan_with(&[(0, 1.0)]),
            &Pose2D::default(),
            &geom(),
            &CostmapConfig::default(),
        );
        assert_eq!(m.lethal_count(), 1);
    }

    #[test]
    fn lethal_core_matches_distance_transform() {
        check_against_distance_transform(CostmapConfig {
            lethal_radius: 0.2,
            inflation_radius: 0.36,
        });
        check_against_distance_transform(CostmapConfig::footprint_safe());
    }

    #[test]
    fn costs_decay_with_distance() {
        let g = geom();
        for cfg in [CostmapConfig::default(), CostmapConfig::footprint_safe()] {
            let m = build_costmap(&scan_with(&[(90, 1.0)]), &Pose2D::default(), &g, &cfg);
            let (hx, hy) = g.world_to_cell(0.0, 1.0 + 0.5 * g.resolution);
            let mut prev = LETHAL;
            for k in 0..20 {
                let d = k as f64 * g.resolution;
                let c = m.cost(hx + k, hy).unwrap();
                if k == 0 || d < cfg.lethal_radius {
                    assert_eq!(c, LETHAL, "k={k}");
                } else {
                    assert!(c < LETHAL && c <= prev, "k={k}");
                }
                prev = c;
            }
            assert_eq!(prev, 0);
        }
    }

    #[test]
    fn robot_cell_never_lethal() {
        let g = geom();
        let pose = Pose2D::new(0.01, 0.01, 0.0);
        let m = build_costmap(
            &scan_with(&[(0, 0.001), (10, 0.002)]),
            &pose,
            &g,
            &CostmapConfig::default(),
        );
        let (rx, ry) = g.world_to_cell(pose.x, pose.y);
        assert!(!m.is_lethal(rx, ry));
    }
}
