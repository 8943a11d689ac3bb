//! Four-wheel mecanum kinematics.
//!
//! Wheel order is always front-left, front-right, rear-right, rear-left. The
//! chassis frame has x forward, y to the left and yaw counter-clockwise.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChassisParams {
    /// Wheel radius `r` in metres.
    pub wheel_radius: f64,
    /// Longitudinal semi-axis `l` in metres.
    pub longitudinal_semi_axis: f64,
    /// Transverse semi-axis `w` in metres.
    pub transverse_semi_axis: f64,
    /// Maximum wheel angular rate in rad/s.
    pub wheel_speed_max: f64,
}

impl Default for ChassisParams {
    fn default() -> Self {
        Self {
            wheel_radius: 0.05,
            longitudinal_semi_axis: 0.15,
            transverse_semi_axis: 0.15,
            wheel_speed_max: 30.0,
        }
    }
}

impl ChassisParams {
    pub fn new(r: f64, l: f64, w: f64, wheel_speed_max: f64) -> Result<Self> {
        let p = Self {
            wheel_radius: r,
            longitudinal_semi_axis: l,
            transverse_semi_axis: w,
            wheel_speed_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("wheel_radius", self.wheel_radius),
            ("longitudinal_semi_axis", self.longitudinal_semi_axis),
            ("transverse_semi_axis", self.transverse_semi_axis),
            ("wheel_speed_max", self.wheel_speed_max),
        ];
        for (name, v) in vals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `L = l + w`.
    pub fn lever(&self) -> f64 {
        self.longitudinal_semi_axis + self.transverse_semi_axis
    }

    /// Largest value of `|vx| + |vy| + L|yaw_rate|`: `r * wheel_speed_max`.
    pub fn velocity_budget(&self) -> f64 {
        self.wheel_radius * self.wheel_speed_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2D {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl Twist2D {
    pub const ZERO: Twist2D = Twist2D {
        vx: 0.0,
        vy: 0.0,
        yaw_rate: 0.0,
    };

    pub fn new(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Self { vx, vy, yaw_rate }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.yaw_rate.is_finite()
    }

    pub fn linear_speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub fl: f64,
    pub fr: f64,
    pub rr: f64,
    pub rl: f64,
}

impl WheelSpeeds {
    pub fn new(fl: f64, fr: f64, rr: f64, rl: f64) -> Self {
        Self { fl, fr, rr, rl }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.fl, self.fr, self.rr, self.rl]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Expresses a world-frame point in this pose's body frame.
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let dx = x - self.x;
        let dy = y - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Maps a body-frame point into the world frame.
    pub fn to_world(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.x + c * x - s * y, self.y + s * x + c * y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Chassis twist produced by the given wheel rates.
pub fn forward_kinematics(params: &ChassisParams, wheels: &WheelSpeeds) -> Result<Twist2D> {
    params.validate()?;
    if !wheels.is_finite() {
        return Err(Error::invalid("wheel speeds must be finite"));
    }
    let k = params.wheel_radius / 4.0;
    let l = params.lever();
    let WheelSpeeds { fl, fr, rr, rl } = *wheels;
    Ok(Twist2D {
        yaw_rate: k * (-fl + fr + rr - rl) / l,
        vx: k * (fl + fr + rr + rl),
        vy: k * (-fl + fr - rr + rl),
    })
}

/// Wheel rates realizing the given chassis twist.
pub fn inverse_kinematics(params: &ChassisParams, twist: &Twist2D) -> Result<WheelSpeeds> {
    params.validate()?;
    if !twist.is_finite() {
        return Err(Error::invalid("twist must be finite"));
    }
    let r = params.wheel_radius;
    let lg = params.lever() * twist.yaw_rate;
    let Twist2D { vx, vy, .. } = *twist;
    Ok(WheelSpeeds {
        fl: (vx - vy - lg) / r,
        fr: (vx + vy + lg) / r,
        rr: (vx - vy + lg) / r,
        rl: (vx + vy - lg) / r,
    })
}

/// Projects a twist into the admissible velocity octahedron.
///
/// The yaw rate is kept and the planar velocity is scaled down uniformly to
/// fit the remaining budget. When rotation alone exceeds the budget the yaw
/// rate saturates and the planar part becomes zero.
pub fn clamp_to_octahedron(params: &ChassisParams, twist: &Twist2D) -> Twist2D {
    let budget = params.velocity_budget();
    let lever = params.lever();
    let rot = lever * twist.yaw_rate.abs();
    if rot >= budget {
        return Twist2D::new(0.0, 0.0, twist.yaw_rate.signum() * budget / lever);
    }
    let linear_budget = budget - rot;
    let linear = twist.vx.abs() + twist.vy.abs();
    // Relative slack keeps a second pass from rescaling by a rounding error.
    if linear <= linear_budget * (1.0 + 1e-12) {
        return *twist;
    }
    let s = linear_budget / linear;
    Twist2D::new(twist.vx * s, twist.vy * s, twist.yaw_rate)
}

/// Integrates a constant body twist over `dt` along the exact screw motion.
pub fn integrate_odometry(pose: &Pose2D, twist: &Twist2D, dt: f64) -> Result<Pose2D> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !twist.is_finite() {
        return Err(Error::invalid("twist must be finite"));
    }
    let th = twist.yaw_rate * dt;
    // sin(th)/w and (1-cos(th))/w, with series near zero rotation
    let (a, b) = if th.abs() < 1e-6 {
        let th2 = th * th;
        (dt * (1.0 - th2 / 6.0), dt * th * (0.5 - th2 / 24.0))
    } else {
        let w = twist.yaw_rate;
        (th.sin() / w, (1.0 - th.cos()) / w)
    };
    let dx = twist.vx * a - twist.vy * b;
    let dy = twist.vx * b + twist.vy * a;
    let (s, c) = pose.yaw.sin_cos();
    Ok(Pose2D {
        x: pose.x + c * dx - s * dy,
        y: pose.y + s * dx + c * dy,
        yaw: wrap_angle(pose.yaw + th),
    })
}
