use serde::{Deserialize, Serialize};

use crate::grid::{Cell, GridGeometry, OccupancyGrid, RayCells};
use crate::kinematics::Pose2D;
use crate::worldsim::LidarScan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapperConfig {
    pub l_occ: f64,
    pub l_free: f64,
    pub clamp: f64,
    /// Probability above which a cell exports as occupied.
    pub occupied_threshold: f64,
    /// Probability below which a cell exports as free.
    pub free_threshold: f64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            l_occ: 0.85,
            l_free: -0.4,
            clamp: 4.0,
            occupied_threshold: 0.65,
            free_threshold: 0.35,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Log-odds occupancy grid built from scans at known poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperState {
    pub geometry: GridGeometry,
    pub config: MapperConfig,
    pub log_odds: Vec<f64>,
    /// Per-cell update counts.
    pub hits: Vec<u32>,
    pub scans: u64,
}

impl MapperState {
    pub fn new(geometry: GridGeometry, config: MapperConfig) -> Self {
        Self {
            geometry,
            config,
            log_odds: vec![0.0; geometry.len()],
            hits: vec![0; geometry.len()],
            scans: 0,
        }
    }

    fn add(&mut self, cx: i64, cy: i64, delta: f64) {
        if !self.geometry.in_bounds(cx, cy) {
            return;
        }
        let i = self.geometry.index(cx, cy);
        let c = self.config.clamp;
        self.log_odds[i] = (self.log_odds[i] + delta).clamp(-c, c);
        self.hits[i] = self.hits[i].saturating_add(1);
    }

    pub fn probability(&self, cx: i64, cy: i64) -> Option<f64> {
        self.geometry
            .in_bounds(cx, cy)
            .then(|| 1.0 / (1.0 + (-self.log_odds[self.geometry.index(cx, cy)]).exp()))
    }

    pub fn observed(&self, index: usize) -> bool {
        self.hits[index] > 0
    }

    /// Thresholded export; the boundaries themselves classify as unknown.
    pub fn to_grid(&self) -> OccupancyGrid {
        let occ = logit(self.config.occupied_threshold);
        let free = logit(self.config.free_threshold);
        let mut g = self.geometry.blank();
        for (cell, l) in g.cells.iter_mut().zip(&self.log_odds) {
            *cell = if *l > occ {
                Cell::Occupied
            } else if *l < free {
                Cell::Free
            } else {
                Cell::Unknown
            };
        }
        g
    }
}

/// Folds one scan into the map: free along each beam, occupied at the endpoint.
pub fn mapper_update(state: &mut MapperState, pose: &Pose2D, scan: &LidarScan) {
    let g = state.geometry;
    let nudge = 0.5 * g.resolution;
    let (l_free, l_occ) = (state.config.l_free, state.config.l_occ);
    for (i, &r) in scan.ranges.iter().enumerate() {
        let angle = pose.yaw + scan.beam_angle(i);
        let hit = r < scan.max_range;
        let reach = if hit { r + nudge } else { r };
        let cells: Vec<_> = RayCells::over(&g, (pose.x, pose.y), angle, reach).collect();
        let free_count = if hit {
            cells.len().saturating_sub(1)
        } else {
            cells.len()
        };
        for c in &cells[..free_count] {
            state.add(c.cx, c.cy, l_free);
        }
        if hit {
            if let Some(end) = cells.last() {
                state.add(end.cx, end.cy, l_occ);
            }
        }
    }
    state.scans += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn geom() -> GridGeometry {
        GridGeometry {
            width: 60,
            height: 60,
            resolution: 0.05,
            origin_x: -1.5,
            origin_y: -1.5,
        }
    }

    fn single_beam(range: f64) -> LidarScan {
        LidarScan {
            angle_min: 0.0,
            angle_increment: 2.0 * PI,
            max_range: 8.0,
            ranges: vec![range],
        }
    }

    #[test]
    fn prior_is_half() {
        let m = MapperState::new(geom(), MapperConfig::default());
        assert!(m.log_odds.iter().all(|l| *l == 0.0));
        assert_eq!(m.probability(3, 3), Some(0.5));
        assert!(m.to_grid().cells.iter().all(|c| *c == Cell::Unknown));
    }

    #[test]
    fn repeated_hits_clamp() {
        let mut m = MapperState::new(geom(), MapperConfig::default());
        let pose = Pose2D::new(0.01, 0.01, 0.0);
        for _ in 0..20 {
            mapper_update(&mut m, &pose, &single_beam(1.0));
        }
        let end = m.geometry.world_to_cell(1.01 + 0.025, 0.01);
        assert_eq!(m.log_odds[m.geometry.index(end.0, end.1)], 4.0);
        let near = m.geometry.world_to_cell(0.3, 0.01);
        assert_eq!(m.log_odds[m.geometry.index(near.0, near.1)], -4.0);
    }

    #[test]
    fn alternating_hit_and_free_drift() {
        let mut m = MapperState::new(geom(), MapperConfig::default());
        let pose = Pose2D::new(0.01, 0.01, 0.0);
        let cell = m.geometry.world_to_cell(1.035, 0.01);
        let idx = m.geometry.index(cell.0, cell.1);
        for k in 1..=4 {
            mapper_update(&mut m, &pose, &single_beam(1.0));
            // a longer beam passes through the same cell as free space
            mapper_update(&mut m, &pose, &single_beam(1.4));
            assert!((m.log_odds[idx] - 0.45 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_boundary_is_unknown() {
        let mut m = MapperState::new(geom(), MapperConfig::default());
        m.log_odds[0] = logit(0.65);
        m.log_odds[1] = logit(0.35);
        m.log_odds[2] = logit(0.65) + 1e-9;
        m.log_odds[3] = logit(0.35) - 1e-9;
        let g = m.to_grid();
        assert_eq!(
            &g.cells[..4],
            &[Cell::Unknown, Cell::Unknown, Cell::Occupied, Cell::Free]
        );
    }

    #[test]
    fn batches_commute() {
        let pose_a = Pose2D::new(0.0, 0.0, 0.3);
        let pose_b = Pose2D::new(0.2, -0.1, -1.0);
        let scan_a = LidarScan {
            angle_min: 0.0,
            angle_increment: 2.0 * PI / 90.0,
            max_range: 1.2,
            ranges: (0..90).map(|i| 0.5 + (i % 7) as f64 * 0.1).collect(),
        };
        let scan_b = LidarScan {
            ranges: (0..90).map(|i| 0.4 + (i % 5) as f64 * 0.15).collect(),
            ..scan_a.clone()
        };
        let mut ab = MapperState::new(geom(), MapperConfig::default());
        mapper_update(&mut ab, &pose_a, &scan_a);
        mapper_update(&mut ab, &pose_b, &scan_b);
        let mut ba = MapperState::new(geom(), MapperConfig::default());
        mapper_update(&mut ba, &pose_b, &scan_b);
        mapper_update(&mut ba, &pose_a, &scan_a);
        for (x, y) in ab.log_odds.iter().zip(&ba.log_odds) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
