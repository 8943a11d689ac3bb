use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera placement in the robot frame (x forward, y left, z up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Downward pitch (rad).
    pub pitch: f64,
}

impl Default for CameraMount {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: CameraModel::BASE_HEIGHT,
            pitch: 0.0,
        }
    }
}

/// Pinhole depth camera. Optical frame: X right, Y down, Z along the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub max_depth: f64,
    pub mount: CameraMount,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::from_fov(640, 480, 70f64.to_radians(), 6.0).expect("default intrinsics are valid")
    }
}

impl CameraModel {
    /// Lens height with the linear axis fully retracted (m).
    pub const BASE_HEIGHT: f64 = 0.8;

    pub fn from_fov(width: u32, height: u32, hfov: f64, max_depth: f64) -> Result<Self> {
        if width == 0 || height == 0 || !(hfov > 0.0 && hfov < std::f64::consts::PI) || !(max_depth > 0.0) {
            return Err(Error::invalid("bad camera intrinsics"));
        }
        Ok(Self {
            width,
            height,
            focal: width as f64 / 2.0 / (hfov / 2.0).tan(),
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            max_depth,
            mount: CameraMount::default(),
        })
    }

    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / 2.0 / self.focal).atan()
    }

    /// Mount pose for a positioning-device state (linear travel in m, tilt in deg).
    pub fn mounted(mut self, linear: f64, tilt_deg: f64) -> Self {
        self.mount.z = Self::BASE_HEIGHT + linear;
        self.mount.pitch = tilt_deg.to_radians();
        self
    }

    fn axes(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let (s, c) = self.mount.pitch.sin_cos();
        let forward = [c, 0.0, -s];
        let right = [0.0, -1.0, 0.0];
        let down = [-s, 0.0, -c];
        (right, down, forward)
    }

    /// Robot-frame point to optical-frame coordinates.
    pub fn to_optical(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.mount.x, p[1] - self.mount.y, p[2] - self.mount.z];
        let dot = |a: [f64; 3]| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
        let (r, dn, f) = self.axes();
        [dot(r), dot(dn), dot(f)]
    }

    pub fn from_optical(&self, q: [f64; 3]) -> [f64; 3] {
        let (r, dn, f) = self.axes();
        let m = &self.mount;
        [
            m.x + q[0] * r[0] + q[1] * dn[0] + q[2] * f[0],
            m.y + q[0] * r[1] + q[1] * dn[1] + q[2] * f[1],
            m.z + q[0] * r[2] + q[1] * dn[2] + q[2] * f[2],
        ]
    }

    /// Pixel and depth of a robot-frame point; `None` behind the lens.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64, f64)> {
        let [x, y, z] = self.to_optical(p);
        (z > 1e-6).then(|| (self.cx + self.focal * x / z, self.cy + self.focal * y / z, z))
    }

    /// Robot-frame point seen at pixel `(u, v)` with optical depth `depth`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        self.from_optical([
            (u - self.cx) * depth / self.focal,
            (v - self.cy) * depth / self.focal,
            depth,
        ])
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}
