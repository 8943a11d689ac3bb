use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{clamp_to_octahedron, wrap_angle, ChassisParams, Pose2D, Twist2D};
use crate::nav::costmap::Costmap;
use crate::nav::planner::{plan_cells, PlannedPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FollowParams {
    /// Distance along the path to the pursued point (m).
    pub lookahead: f64,
    pub v_max: f64,
    /// Deceleration used for the slowdown profile near the goal (m/s^2).
    pub decel: f64,
    /// Proportional gain on heading error (1/s).
    pub yaw_gain: f64,
    pub yaw_rate_max: f64,
    pub goal_tolerance: f64,
    pub heading_tolerance: f64,
}

impl Default for FollowParams {
    fn default() -> Self {
        Self {
            lookahead: 0.5,
            v_max: 1.5,
            decel: 0.9,
            yaw_gain: 3.0,
            yaw_rate_max: 3.0,
            goal_tolerance: 0.15,
            heading_tolerance: 0.2,
        }
    }
}

/// What the heading controller points the chassis at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gaze {
    Heading(f64),
    Point(f64, f64),
}

impl Gaze {
    pub fn heading_from(&self, pose: &Pose2D) -> f64 {
        match *self {
            Gaze::Heading(h) => h,
            Gaze::Point(x, y) => {
                if (x - pose.x).hypot(y - pose.y) < 1e-9 {
                    pose.yaw
                } else {
                    (y - pose.y).atan2(x - pose.x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowOutput {
    /// Command after the octahedron filter.
    pub twist: Twist2D,
    /// Controller output before the filter.
    pub raw: Twist2D,
    pub reached: bool,
}

fn yaw_command(pose: &Pose2D, gaze: &Gaze, params: &FollowParams) -> f64 {
    let err = wrap_angle(gaze.heading_from(pose) - pose.yaw);
    (params.yaw_gain * err).clamp(-params.yaw_rate_max, params.yaw_rate_max)
}

/// Lookahead point and remaining path length from the point closest to `pose`.
fn lookahead_point(path: &[Pose2D], pose: &Pose2D, lookahead: f64) -> ((f64, f64), f64) {
    let closest = path
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.distance_to(pose).total_cmp(&b.1.distance_to(pose)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut remaining = path[closest].distance_to(pose);
    for w in path[closest..].windows(2) {
        remaining += w[0].distance_to(&w[1]);
    }
    let mut left = lookahead;
    let mut point = (path[closest].x, path[closest].y);
    for w in path[closest..].windows(2) {
        let seg = w[0].distance_to(&w[1]);
        if seg >= left {
            let f = left / seg;
            point = (w[0].x + (w[1].x - w[0].x) * f, w[0].y + (w[1].y - w[0].y) * f);
            left = 0.0;
            break;
        }
        left -= seg;
        point = (w[1].x, w[1].y);
    }
    if left > 0.0 {
        let last = path[path.len() - 1];
        point = (last.x, last.y);
    }
    (point, remaining)
}

/// Holonomic path tracking: translate toward the lookahead point while the
/// heading independently tracks `gaze`.
pub fn follow_path(
    path: &[Pose2D],
    pose: &Pose2D,
    gaze: Gaze,
    final_heading: Option<f64>,
    params: &FollowParams,
    chassis: &ChassisParams,
) -> Result<FollowOutput> {
    let Some(goal) = path.last() else {
        return Err(Error::invalid("cannot follow an empty path"));
    };
    let at_goal = goal.distance_to(pose) <= params.goal_tolerance;
    if at_goal {
        let aligned = final_heading.is_none_or(|h| wrap_angle(h - pose.yaw).abs() <= params.heading_tolerance);
        if aligned {
            return Ok(FollowOutput {
                twist: Twist2D::ZERO,
                raw: Twist2D::ZERO,
                reached: true,
            });
        }
        let h = final_heading.expect("unaligned implies a final heading");
        let raw = Twist2D::new(0.0, 0.0, yaw_command(pose, &Gaze::Heading(h), params));
        return Ok(FollowOutput {
            twist: clamp_to_octahedron(chassis, &raw),
            raw,
            reached: false,
        });
    }
    let ((lx, ly), remaining) = lookahead_point(path, pose, params.lookahead);
    let (dx, dy) = (lx - pose.x, ly - pose.y);
    let dist = dx.hypot(dy);
    let speed = params.v_max.min((2.0 * params.decel * remaining).sqrt());
    let (wx, wy) = if dist > 1e-9 {
        (speed * dx / dist, speed * dy / dist)
    } else {
        (0.0, 0.0)
    };
    let (s, c) = pose.yaw.sin_cos();
    let raw = Twist2D::new(c * wx + s * wy, -s * wx + c * wy, yaw_command(pose, &gaze, params));
    Ok(FollowOutput {
        twist: clamp_to_octahedron(chassis, &raw),
        raw,
        reached: false,
    })
}

/// Latest world-frame person position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonFix {
    pub x: f64,
    pub y: f64,
    pub stamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonFollowParams {
    pub standoff: f64,
    /// Fixes older than this (s) are stale.
    pub fresh_age: f64,
    pub search_timeout: f64,
    pub replan_period: f64,
    /// Replan early when the standoff point moves farther than this (m).
    pub replan_shift: f64,
    pub path: FollowParams,
}

impl Default for PersonFollowParams {
    fn default() -> Self {
        Self {
            standoff: 1.2,
            fresh_age: 1.0,
            search_timeout: 5.0,
            replan_period: 0.5,
            replan_shift: 0.25,
            path: FollowParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PersonFollowStatus {
    Approaching,
    AtStandoff,
    Holding,
    SearchTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonFollowOutput {
    pub twist: Twist2D,
    pub status: PersonFollowStatus,
}

/// Weight of the newest sample in the person velocity estimate.
const VELOCITY_SMOOTHING: f64 = 0.5;
/// Fixes further apart than this (s) restart the velocity estimate.
const VELOCITY_GAP: f64 = 0.5;

/// Person-follow controller with a cached plan toward the standoff point.
///
/// The person's velocity is estimated from successive fixes; the fix is
/// extrapolated by its age and the bearing rate is fed forward to the
/// heading loop.
#[derive(Debug, Clone, Default)]
pub struct PersonFollower {
    path: Option<PlannedPath>,
    planned_for: Option<(f64, f64)>,
    planned_at: f64,
    last_fix: Option<PersonFix>,
    velocity: (f64, f64),
    last_twist: Twist2D,
}

impl PersonFollower {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn path(&self) -> Option<&PlannedPath> {
        self.path.as_ref()
    }

    /// Smoothed world-frame person velocity (m/s).
    pub fn person_velocity(&self) -> (f64, f64) {
        self.velocity
    }

    fn observe(&mut self, fix: &PersonFix) {
        match self.last_fix {
            Some(prev) if fix.stamp <= prev.stamp => return,
            Some(prev) if fix.stamp - prev.stamp <= VELOCITY_GAP => {
                let dt = fix.stamp - prev.stamp;
                let v = ((fix.x - prev.x) / dt, (fix.y - prev.y) / dt);
                let a = VELOCITY_SMOOTHING;
                self.velocity = (
                    (1.0 - a) * self.velocity.0 + a * v.0,
                    (1.0 - a) * self.velocity.1 + a * v.1,
                );
            }
            _ => self.velocity = (0.0, 0.0),
        }
        self.last_fix = Some(*fix);
    }

    pub fn follow_person(
        &mut self,
        fix: Option<&PersonFix>,
        pose: &Pose2D,
        now: f64,
        costmap: &Costmap,
        params: &PersonFollowParams,
        chassis: &ChassisParams,
    ) -> PersonFollowOutput {
        let out = self.follow_inner(fix, pose, now, costmap, params, chassis);
        self.last_twist = out.twist;
        out
    }

    fn follow_inner(
        &mut self,
        fix: Option<&PersonFix>,
        pose: &Pose2D,
        now: f64,
        costmap: &Costmap,
        params: &PersonFollowParams,
        chassis: &ChassisParams,
    ) -> PersonFollowOutput {
        let fp = &params.path;
        let Some(fix) = fix else {
            return PersonFollowOutput {
                twist: Twist2D::ZERO,
                status: PersonFollowStatus::Holding,
            };
        };
        let age = now - fix.stamp;
        if age >= params.search_timeout {
            self.path = None;
            self.last_fix = None;
            return PersonFollowOutput {
                twist: Twist2D::ZERO,
                status: PersonFollowStatus::SearchTimeout,
            };
        }
        self.observe(fix);
        let fresh = age < params.fresh_age;
        let (vx, vy) = if fresh { self.velocity } else { (0.0, 0.0) };
        let horizon = age.clamp(0.0, params.fresh_age);
        let (px, py) = (fix.x + vx * horizon, fix.y + vy * horizon);
        let gaze = Gaze::Point(px, py);

        // bearing rate of the person as seen from the moving robot
        let (s, c) = pose.yaw.sin_cos();
        let t = self.last_twist;
        let robot_v = (c * t.vx - s * t.vy, s * t.vx + c * t.vy);
        let (rx, ry) = (px - pose.x, py - pose.y);
        let r2 = rx * rx + ry * ry;
        let feedforward = if r2 > 1e-6 {
            (rx * (vy - robot_v.1) - ry * (vx - robot_v.0)) / r2
        } else {
            0.0
        };
        let finish = |raw: Twist2D, status| {
            let yaw = (raw.yaw_rate + feedforward).clamp(-fp.yaw_rate_max, fp.yaw_rate_max);
            let raw = Twist2D::new(raw.vx, raw.vy, yaw);
            PersonFollowOutput {
                twist: clamp_to_octahedron(chassis, &raw),
                status,
            }
        };
        let turn_only = |status| finish(Twist2D::new(0.0, 0.0, yaw_command(pose, &gaze, fp)), status);
        if !fresh {
            return turn_only(PersonFollowStatus::Holding);
        }
        let (dx, dy) = (rx, ry);
        let d = r2.sqrt();
        if d <= params.standoff {
            self.path = None;
            return turn_only(PersonFollowStatus::AtStandoff);
        }
        let person = (px, py);
        let stale_plan = self.path.is_none()
            || now - self.planned_at >= params.replan_period
            || self
                .planned_for
                .is_none_or(|p| (p.0 - person.0).hypot(p.1 - person.1) > params.replan_shift);
        if stale_plan {
            self.path = plan_toward(costmap, pose, person).map(|p| trim_to_standoff(p, person, params.standoff));
            self.planned_for = Some(person);
            self.planned_at = now;
        }
        let straight = [
            *pose,
            Pose2D::new(px - dx / d * params.standoff, py - dy / d * params.standoff, 0.0),
        ];
        let poses: &[Pose2D] = match &self.path {
            Some(p) => &p.poses,
            None => &straight,
        };
        match follow_path(poses, pose, gaze, None, fp, chassis) {
            Ok(out) if out.reached => {
                self.path = None;
                turn_only(PersonFollowStatus::AtStandoff)
            }
            Ok(out) => finish(out.raw, PersonFollowStatus::Approaching),
            Err(_) => turn_only(PersonFollowStatus::Holding),
        }
    }
}

/// Cuts the path at the first pose within `standoff` of `person`.
fn trim_to_standoff(mut path: PlannedPath, person: (f64, f64), standoff: f64) -> PlannedPath {
    let near = |p: &Pose2D| (p.x - person.0).hypot(p.y - person.1) <= standoff;
    if let Some(k) = path.poses.iter().position(near) {
        let keep = (k + 1).max(1);
        path.poses.truncate(keep);
        path.cells.truncate(keep);
    }
    path
}

/// Nearest non-lethal cell to `cell` within `reach` cells (ties broken by scan order).
fn nearest_free(costmap: &Costmap, cell: (i64, i64), reach: i64) -> Option<(i64, i64)> {
    let mut best: Option<((i64, i64), i64)> = None;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let c = (cell.0 + dx, cell.1 + dy);
            let d2 = dx * dx + dy * dy;
            if d2 > reach * reach || best.is_some_and(|(_, b)| b <= d2) {
                continue;
            }
            if costmap.cost(c.0, c.1).is_some_and(|v| v != crate::nav::costmap::LETHAL) {
                best = Some((c, d2));
            }
        }
    }
    best.map(|(c, _)| c)
}

/// Plans to `target`, backing off toward the robot when the target cell is lethal.
/// A robot already inside the lethal zone plans from the nearest free cell.
pub fn plan_toward(costmap: &Costmap, pose: &Pose2D, target: (f64, f64)) -> Option<PlannedPath> {
    let g = costmap.geometry;
    let reach = (costmap.lethal_radius.max(0.5) / g.resolution).ceil() as i64;
    let start = nearest_free(costmap, g.world_to_cell(pose.x, pose.y), reach)?;
    let (dx, dy) = (target.0 - pose.x, target.1 - pose.y);
    let len = dx.hypot(dy);
    let steps = (len / g.resolution).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let f = 1.0 - k as f64 / steps as f64;
        let cell = g.world_to_cell(pose.x + dx * f, pose.y + dy * f);
        match costmap.cost(cell.0, cell.1) {
            Some(c) if c != crate::nav::costmap::LETHAL => {
                return plan_cells(costmap, start, cell).ok();
            }
            _ => continue,
        }
    }
    None
}
