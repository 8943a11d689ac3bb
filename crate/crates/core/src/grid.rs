//! Shared occupancy raster and grid ray traversal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

/// Raster placement shared by grids, costmaps and mapper state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl GridGeometry {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_bounds(&self, cx: i64, cy: i64) -> bool {
        cx >= 0 && cy >= 0 && (cx as usize) < self.width && (cy as usize) < self.height
    }

    pub fn index(&self, cx: i64, cy: i64) -> usize {
        cy as usize * self.width + cx as usize
    }

    pub fn coords(&self, index: usize) -> (i64, i64) {
        ((index % self.width) as i64, (index / self.width) as i64)
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin_x) / self.resolution).floor() as i64,
            ((y - self.origin_y) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, cx: i64, cy: i64) -> (f64, f64) {
        (
            self.origin_x + (cx as f64 + 0.5) * self.resolution,
            self.origin_y + (cy as f64 + 0.5) * self.resolution,
        )
    }

    /// An all-`Unknown` grid with this placement.
    pub fn blank(&self) -> OccupancyGrid {
        OccupancyGrid {
            width: self.width,
            height: self.height,
            resolution: self.resolution,
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            cells: vec![Cell::Unknown; self.len()],
        }
    }
}

/// Row-major raster; cell (0, 0) has its lower-left corner at `(origin_x, origin_y)`.
///
/// Rasters are axis-aligned with the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: (f64, f64), fill: Cell) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid("resolution must be positive"));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin_x: origin.0,
            origin_y: origin.1,
            cells: vec![fill; width * height],
        })
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: (f64, f64),
        cells: Vec<Cell>,
    ) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::invalid(format!(
                "cell count {} != {width}x{height}",
                cells.len()
            )));
        }
        let mut g = Self::new(0, 0, resolution, origin, Cell::Unknown)?;
        g.width = width;
        g.height = height;
        g.cells = cells;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            width: self.width,
            height: self.height,
            resolution: self.resolution,
            origin_x: self.origin_x,
            origin_y: self.origin_y,
        }
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn in_bounds(&self, cx: i64, cy: i64) -> bool {
        cx >= 0 && cy >= 0 && (cx as usize) < self.width && (cy as usize) < self.height
    }

    pub fn get(&self, cx: i64, cy: i64) -> Option<Cell> {
        self.in_bounds(cx, cy)
            .then(|| self.cells[self.index(cx as usize, cy as usize)])
    }

    pub fn set(&mut self, cx: usize, cy: usize, c: Cell) {
        let i = self.index(cx, cy);
        self.cells[i] = c;
    }

    /// Cell containing a world point (may be out of bounds).
    pub fn world_to_cell(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin_x) / self.resolution).floor() as i64,
            ((y - self.origin_y) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, cx: i64, cy: i64) -> (f64, f64) {
        (
            self.origin_x + (cx as f64 + 0.5) * self.resolution,
            self.origin_y + (cy as f64 + 0.5) * self.resolution,
        )
    }

    /// Occupied test with out-of-bounds treated as free space.
    pub fn is_occupied_world(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = self.world_to_cell(x, y);
        self.get(cx, cy) == Some(Cell::Occupied)
    }

    pub fn same_geometry(&self, other: &OccupancyGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin_x == other.origin_x
            && self.origin_y == other.origin_y
    }

    /// True when the straight segment crosses no occupied cell.
    pub fn line_of_sight(&self, from: (f64, f64), to: (f64, f64)) -> bool {
        let dx = to.0 - from.0;
        let dy = to.1 - from.1;
        let len = dx.hypot(dy);
        if len == 0.0 {
            return !self.is_occupied_world(from.0, from.1);
        }
        let angle = dy.atan2(dx);
        for step in RayCells::new(self, from, angle, len) {
            if self.get(step.cx, step.cy) == Some(Cell::Occupied) {
                return false;
            }
        }
        true
    }
}

/// One cell visited by a ray, with entry/exit distances along the ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayStep {
    pub cx: i64,
    pub cy: i64,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Incremental (Amanatides–Woo) traversal of the cells pierced by a ray,
/// stopping at `max_range` or when the ray leaves the raster.
pub struct RayCells {
    cx: i64,
    cy: i64,
    step_x: i64,
    step_y: i64,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    t: f64,
    max_range: f64,
    width: i64,
    height: i64,
    done: bool,
}

impl RayCells {
    pub fn new(grid: &OccupancyGrid, origin: (f64, f64), angle: f64, max_range: f64) -> Self {
        Self::over(&grid.geometry(), origin, angle, max_range)
    }

    pub fn over(grid: &GridGeometry, origin: (f64, f64), angle: f64, max_range: f64) -> Self {
        let (dy, dx) = angle.sin_cos();
        let res = grid.resolution;
        // ray origin in cell units
        let gx = (origin.0 - grid.origin_x) / res;
        let gy = (origin.1 - grid.origin_y) / res;
        let cx = gx.floor() as i64;
        let cy = gy.floor() as i64;
        let axis = |g: f64, c: i64, d: f64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, ((c + 1) as f64 - g) * res / d, res / d)
            } else if d < 0.0 {
                (-1, (g - c as f64) * res / -d, res / -d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_x, t_max_x, t_delta_x) = axis(gx, cx, dx);
        let (step_y, t_max_y, t_delta_y) = axis(gy, cy, dy);
        Self {
            cx,
            cy,
            step_x,
            step_y,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            t: 0.0,
            max_range,
            width: grid.width as i64,
            height: grid.height as i64,
            done: false,
        }
    }
}

impl Iterator for RayCells {
    type Item = RayStep;

    fn next(&mut self) -> Option<RayStep> {
        if self.done
            || self.t >= self.max_range
            || self.cx < 0
            || self.cy < 0
            || self.cx >= self.width
            || self.cy >= self.height
        {
            self.done = true;
            return None;
        }
        let t_exit = self.t_max_x.min(self.t_max_y).min(self.max_range);
        let out = RayStep {
            cx: self.cx,
            cy: self.cy,
            t_enter: self.t,
            t_exit,
        };
        if self.t_max_x < self.t_max_y {
            self.cx += self.step_x;
            self.t = self.t_max_x;
            self.t_max_x += self.t_delta_x;
        } else {
            self.cy += self.step_y;
            self.t = self.t_max_y;
            self.t_max_y += self.t_delta_y;
        }
        Some(out)
    }
}
