//! Deterministic 2D home simulator.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Cell, OccupancyGrid, RayCells};
use crate::kinematics::{integrate_odometry, wrap_angle, Pose2D, Twist2D};

pub const WORLD_MAGIC: &str = "MARVINWORLD v1";

/// Parses a world file: a header of `key value...` lines, a `---` separator,
/// then ASCII art rows (`#` occupied, `.` free, `?` unknown), top row first.
///
/// Header keys: `resolution <m per character>` (required), `origin <x> <y>`,
/// `cells_per_char <n>` to upsample the art into a finer raster.
pub fn parse_world(text: &str) -> Result<OccupancyGrid> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == WORLD_MAGIC => {}
        Some((_, l)) => return Err(Error::parse(1, format!("expected `{WORLD_MAGIC}`, got `{l}`"))),
        None => return Err(Error::parse(1, "empty world file")),
    }
    let mut resolution = None;
    let mut origin = (0.0, 0.0);
    let mut scale = 1usize;
    let mut art: Vec<(usize, &str)> = Vec::new();
    let mut in_art = false;
    for (i, raw) in lines {
        let lineno = i + 1;
        if in_art {
            let row = raw.trim_end();
            if !row.is_empty() {
                art.push((lineno, row));
            }
            continue;
        }
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "---" {
            in_art = true;
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        let vals: Vec<&str> = parts.collect();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(lineno, format!("bad number `{s}`")))
        };
        match (key, vals.as_slice()) {
            ("resolution", [v]) => resolution = Some(num(v)?),
            ("origin", [x, y]) => origin = (num(x)?, num(y)?),
            ("cells_per_char", [v]) => {
                scale = v
                    .parse::<usize>()
                    .ok()
                    .filter(|s| *s > 0)
                    .ok_or_else(|| Error::parse(lineno, "cells_per_char must be a positive integer"))?
            }
            _ => return Err(Error::parse(lineno, format!("unrecognized header line `{line}`"))),
        }
    }
    let resolution = resolution.ok_or_else(|| Error::parse(1, "missing `resolution`"))?;
    if !(resolution > 0.0) {
        return Err(Error::parse(1, "resolution must be positive"));
    }
    if art.is_empty() {
        return Err(Error::parse(1, "world has no grid rows"));
    }
    let cols = art[0].1.chars().count();
    let rows = art.len();
    let mut grid = OccupancyGrid::new(
        cols * scale,
        rows * scale,
        resolution / scale as f64,
        origin,
        Cell::Free,
    )?;
    for (r, (lineno, row)) in art.iter().enumerate() {
        if row.chars().count() != cols {
            return Err(Error::parse(
                *lineno,
                format!("row width {} != {cols}", row.chars().count()),
            ));
        }
        let gy = rows - 1 - r;
        for (c, ch) in row.chars().enumerate() {
            let cell = match ch {
                '#' => Cell::Occupied,
                '.' | ' ' => Cell::Free,
                '?' => Cell::Unknown,
                other => return Err(Error::parse(*lineno, format!("unexpected character `{other}`"))),
            };
            for dy in 0..scale {
                for dx in 0..scale {
                    grid.set(c * scale + dx, gy * scale + dy, cell);
                }
            }
        }
    }
    Ok(grid)
}

/// Renders a grid as a world file, one character per cell.
pub fn format_world(grid: &OccupancyGrid) -> String {
    let mut out = format!(
        "{WORLD_MAGIC}\nresolution {:?}\norigin {:?} {:?}\n---\n",
        grid.resolution, grid.origin_x, grid.origin_y
    );
    for gy in (0..grid.height).rev() {
        for gx in 0..grid.width {
            out.push(match grid.cells[grid.index(gx, gy)] {
                Cell::Free => '.',
                Cell::Occupied => '#',
                Cell::Unknown => '?',
            });
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    pub beams: usize,
    pub max_range: f64,
    pub noise_sigma: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beams: 360,
            max_range: 8.0,
            noise_sigma: 0.01,
        }
    }
}

/// One full sweep; beam `i` points at `angle_min + i * angle_increment` in the robot frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
    pub ranges: Vec<f64>,
}

impl LidarScan {
    pub fn beam_angle(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }
}

/// Traces every beam to the first occupied cell or `max_range`.
pub fn raycast_lidar<R: Rng + ?Sized>(
    grid: &OccupancyGrid,
    pose: &Pose2D,
    spec: &LidarSpec,
    rng: Option<&mut R>,
) -> Result<LidarScan> {
    if grid.is_occupied_world(pose.x, pose.y) {
        return Err(Error::InvalidState(format!(
            "lidar pose ({:.3}, {:.3}) is inside an obstacle",
            pose.x, pose.y
        )));
    }
    let n = spec.beams.max(1);
    let inc = 2.0 * PI / n as f64;
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        let angle = pose.yaw + i as f64 * inc;
        let hit = RayCells::new(grid, (pose.x, pose.y), angle, spec.max_range)
            .find(|s| grid.get(s.cx, s.cy) == Some(Cell::Occupied))
            .map(|s| s.t_enter);
        ranges.push(hit.unwrap_or(spec.max_range));
    }
    if let Some(rng) = rng {
        if spec.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
            for r in ranges.iter_mut() {
                if *r < spec.max_range {
                    *r = (*r + noise.sample(rng)).clamp(1e-3, spec.max_range);
                }
            }
        }
    }
    Ok(LidarScan {
        angle_min: 0.0,
        angle_increment: inc,
        max_range: spec.max_range,
        ranges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyLimits {
    pub v_max: f64,
    pub a_max: f64,
    /// Yaw acceleration limit, rad/s^2.
    pub yaw_accel_max: f64,
    /// Footprint length along body x (m).
    pub length: f64,
    /// Footprint width along body y (m).
    pub width: f64,
}

impl Default for BodyLimits {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            a_max: 1.0,
            yaw_accel_max: 6.0,
            length: 0.60,
            width: 0.40,
        }
    }
}

impl BodyLimits {
    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotBody {
    pub pose: Pose2D,
    /// Achieved body twist.
    pub twist: Twist2D,
    /// Latest commanded body twist.
    pub command: Twist2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    Standing,
    Sitting,
    Laying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case")]
pub enum PersonAction {
    Posture { posture: Posture },
    Speed { speed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub at: f64,
    #[serde(flatten)]
    pub action: PersonAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonAgent {
    pub name: String,
    pub pose: Pose2D,
    pub speed: f64,
    pub waypoints: Vec<(f64, f64)>,
    pub looped: bool,
    pub posture: Posture,
    pub script: Vec<ScriptEvent>,
    next_waypoint: usize,
    next_event: usize,
}

impl PersonAgent {
    pub fn new(name: &str, pose: Pose2D, speed: f64) -> Result<Self> {
        if !(speed >= 0.0) {
            return Err(Error::invalid("person speed must be non-negative"));
        }
        Ok(Self {
            name: name.to_string(),
            pose,
            speed,
            waypoints: Vec::new(),
            looped: false,
            posture: Posture::Standing,
            script: Vec::new(),
            next_waypoint: 0,
            next_event: 0,
        })
    }

    pub fn with_route(mut self, waypoints: Vec<(f64, f64)>, looped: bool) -> Self {
        self.waypoints = waypoints;
        self.looped = looped;
        self
    }

    pub fn with_script(mut self, mut script: Vec<ScriptEvent>) -> Self {
        script.sort_by(|a, b| a.at.total_cmp(&b.at));
        self.script = script;
        self
    }

    fn advance(&mut self, now: f64, dt: f64, events: &mut Vec<WorldEvent>) {
        while let Some(ev) = self.script.get(self.next_event) {
            if ev.at > now + 1e-9 {
                break;
            }
            match ev.action {
                PersonAction::Posture { posture } => {
                    if posture != self.posture {
                        self.posture = posture;
                        events.push(WorldEvent::PostureChanged {
                            person: self.name.clone(),
                            posture,
                        });
                    }
                }
                PersonAction::Speed { speed } => self.speed = speed.max(0.0),
            }
            self.next_event += 1;
        }
        if self.posture != Posture::Standing || self.waypoints.is_empty() {
            return;
        }
        let mut budget = self.speed * dt;
        while budget > 0.0 {
            if self.next_waypoint >= self.waypoints.len() {
                if self.looped {
                    self.next_waypoint = 0;
                } else {
                    return;
                }
            }
            let (wx, wy) = self.waypoints[self.next_waypoint];
            let dx = wx - self.pose.x;
            let dy = wy - self.pose.y;
            let d = dx.hypot(dy);
            if d > 1e-12 {
                self.pose.yaw = dy.atan2(dx);
            }
            if d <= budget {
                self.pose.x = wx;
                self.pose.y = wy;
                budget -= d;
                self.next_waypoint += 1;
                if d <= 1e-12 && self.waypoints.len() == 1 {
                    return;
                }
            } else {
                self.pose.x += dx / d * budget;
                self.pose.y += dy / d * budget;
                budget = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorldEvent {
    Collision { x: f64, y: f64, yaw: f64 },
    PostureChanged { person: String, posture: Posture },
}

/// Separating-axis test between the robot rectangle and one grid cell.
fn rect_overlaps_cell(pose: &Pose2D, hl: f64, hw: f64, cmin: (f64, f64), cmax: (f64, f64)) -> bool {
    const EPS: f64 = 1e-9;
    let (s, c) = pose.yaw.sin_cos();
    let ex = hl * c.abs() + hw * s.abs();
    let ey = hl * s.abs() + hw * c.abs();
    if pose.x + ex <= cmin.0 + EPS || pose.x - ex >= cmax.0 - EPS {
        return false;
    }
    if pose.y + ey <= cmin.1 + EPS || pose.y - ey >= cmax.1 - EPS {
        return false;
    }
    let half = ((cmax.0 - cmin.0) * 0.5, (cmax.1 - cmin.1) * 0.5);
    let center = (cmin.0 + half.0, cmin.1 + half.1);
    let d = (center.0 - pose.x, center.1 - pose.y);
    for (ax, ay, r_rect) in [(c, s, hl), (-s, c, hw)] {
        let dist = (d.0 * ax + d.1 * ay).abs();
        let r_cell = half.0 * ax.abs() + half.1 * ay.abs();
        if dist >= r_rect + r_cell - EPS {
            return false;
        }
    }
    true
}

/// True when the footprint at `pose` overlaps an occupied cell.
pub fn footprint_collides(grid: &OccupancyGrid, pose: &Pose2D, limits: &BodyLimits) -> bool {
    let hl = limits.length * 0.5;
    let hw = limits.width * 0.5;
    let r = limits.half_diagonal();
    let (x0, y0) = grid.world_to_cell(pose.x - r, pose.y - r);
    let (x1, y1) = grid.world_to_cell(pose.x + r, pose.y + r);
    for cy in y0..=y1 {
        for cx in x0..=x1 {
            if grid.get(cx, cy) != Some(Cell::Occupied) {
                continue;
            }
            let lo = (
                grid.origin_x + cx as f64 * grid.resolution,
                grid.origin_y + cy as f64 * grid.resolution,
            );
            let hi = (lo.0 + grid.resolution, lo.1 + grid.resolution);
            if rect_overlaps_cell(pose, hl, hw, lo, hi) {
                return true;
            }
        }
    }
    false
}

fn slew(current: f64, target: f64, max_delta: f64) -> f64 {
    current + (target - current).clamp(-max_delta, max_delta)
}

#[derive(Debug, Clone)]
pub struct World {
    pub grid: OccupancyGrid,
    pub robot: RobotBody,
    pub persons: Vec<PersonAgent>,
    pub limits: BodyLimits,
    pub time: f64,
}

impl World {
    pub fn new(grid: OccupancyGrid, start: Pose2D, limits: BodyLimits) -> Result<Self> {
        if footprint_collides(&grid, &start, &limits) {
            return Err(Error::InvalidState(format!(
                "robot start pose ({:.2}, {:.2}) overlaps an obstacle",
                start.x, start.y
            )));
        }
        Ok(Self {
            grid,
            robot: RobotBody {
                pose: start,
                ..RobotBody::default()
            },
            persons: Vec::new(),
            limits,
            time: 0.0,
        })
    }

    pub fn command(&mut self, twist: Twist2D) {
        self.robot.command = twist;
    }

    fn free(&self, pose: &Pose2D) -> bool {
        !footprint_collides(&self.grid, pose, &self.limits)
    }

    /// Advances the clock, the robot body and all persons by `dt`.
    pub fn step(&mut self, dt: f64) -> Result<Vec<WorldEvent>> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let mut events = Vec::new();
        let lim = self.limits;
        let cmd = self.robot.command;
        let cur = self.robot.twist;
        let mut tw = Twist2D::new(
            slew(cur.vx, cmd.vx.clamp(-lim.v_max, lim.v_max), lim.a_max * dt),
            slew(cur.vy, cmd.vy.clamp(-lim.v_max, lim.v_max), lim.a_max * dt),
            slew(cur.yaw_rate, cmd.yaw_rate, lim.yaw_accel_max * dt),
        );
        let start = self.robot.pose;
        let target = integrate_odometry(&start, &tw, dt)?;
        if self.free(&target) {
            self.robot.pose = target;
        } else {
            let (resolved, blocked_x, blocked_y) = self.resolve_contact(&start, &target);
            self.robot.pose = resolved;
            // zero the world-frame velocity along each blocked axis
            let (s, c) = start.yaw.sin_cos();
            let mut wx = c * tw.vx - s * tw.vy;
            let mut wy = s * tw.vx + c * tw.vy;
            if blocked_x {
                wx = 0.0;
            }
            if blocked_y {
                wy = 0.0;
            }
            if !blocked_x && !blocked_y {
                wx = 0.0;
                wy = 0.0;
            }
            tw.vx = c * wx + s * wy;
            tw.vy = -s * wx + c * wy;
            if resolved.yaw != target.yaw {
                tw.yaw_rate = 0.0;
            }
            events.push(WorldEvent::Collision {
                x: resolved.x,
                y: resolved.y,
                yaw: resolved.yaw,
            });
        }
        self.robot.twist = tw;
        self.time += dt;
        for p in self.persons.iter_mut() {
            p.advance(self.time, dt, &mut events);
        }
        Ok(events)
    }

    /// Moves as far as possible toward `target`, then slides along free axes.
    fn resolve_contact(&self, start: &Pose2D, target: &Pose2D) -> (Pose2D, bool, bool) {
        let lerp = |f: f64| Pose2D {
            x: start.x + (target.x - start.x) * f,
            y: start.y + (target.y - start.y) * f,
            yaw: wrap_angle(start.yaw + wrap_angle(target.yaw - start.yaw) * f),
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if self.free(&lerp(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let contact = if self.free(&lerp(lo)) { lerp(lo) } else { *start };
        let rest_x = (target.x - start.x) * (1.0 - lo);
        let rest_y = (target.y - start.y) * (1.0 - lo);
        let mut pose = contact;
        let slide_x = Pose2D {
            x: pose.x + rest_x,
            ..pose
        };
        let blocked_x = !self.free(&slide_x);
        if !blocked_x {
            pose = slide_x;
        }
        let slide_y = Pose2D {
            y: pose.y + rest_y,
            ..pose
        };
        let blocked_y = !self.free(&slide_y);
        if !blocked_y {
            pose = slide_y;
        }
        (pose, blocked_x && rest_x != 0.0, blocked_y && rest_y != 0.0)
    }

    pub fn scan<R: Rng + ?Sized>(&self, spec: &LidarSpec, rng: Option<&mut R>) -> Result<LidarScan> {
        raycast_lidar(&self.grid, &self.robot.pose, spec, rng)
    }
}
