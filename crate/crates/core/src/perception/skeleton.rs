use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldsim::Posture;

pub const JOINT_COUNT: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl Joint {
    pub const ALL: [Joint; JOINT_COUNT] = [
        Joint::Nose,
        Joint::LeftEye,
        Joint::RightEye,
        Joint::LeftEar,
        Joint::RightEar,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftElbow,
        Joint::RightElbow,
        Joint::LeftWrist,
        Joint::RightWrist,
        Joint::LeftHip,
        Joint::RightHip,
        Joint::LeftKnee,
        Joint::RightKnee,
        Joint::LeftAnkle,
        Joint::RightAnkle,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

/// Image-space skeleton in the usual 17-joint order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Keypoint>", into = "Vec<Keypoint>")]
pub struct Keypoints17([Keypoint; JOINT_COUNT]);

impl Keypoints17 {
    pub fn new(points: Vec<Keypoint>) -> Result<Self> {
        let n = points.len();
        let arr: [Keypoint; JOINT_COUNT] = points
            .try_into()
            .map_err(|_| Error::invalid(format!("expected {JOINT_COUNT} joints, got {n}")))?;
        if let Some(k) = arr.iter().find(|k| !(0.0..=1.0).contains(&k.confidence)) {
            return Err(Error::invalid(format!("confidence {} outside [0, 1]", k.confidence)));
        }
        Ok(Self(arr))
    }

    pub fn points(&self) -> &[Keypoint; JOINT_COUNT] {
        &self.0
    }

    pub fn get(&self, j: Joint) -> &Keypoint {
        &self.0[j as usize]
    }

    /// Mean pixel of the confident joints among `joints`.
    pub fn centroid(&self, joints: &[Joint], min_conf: f64) -> Option<(f64, f64)> {
        let pts: Vec<_> = joints
            .iter()
            .map(|j| self.get(*j))
            .filter(|k| k.confidence >= min_conf)
            .collect();
        if pts.is_empty() {
            return None;
        }
        let n = pts.len() as f64;
        Some((
            pts.iter().map(|k| k.u).sum::<f64>() / n,
            pts.iter().map(|k| k.v).sum::<f64>() / n,
        ))
    }

    /// Axis-aligned box around the confident joints, padded by `pad` of its size.
    pub fn bbox(&self, min_conf: f64, pad: f64) -> Option<BBox> {
        let pts: Vec<_> = self.0.iter().filter(|k| k.confidence >= min_conf).collect();
        if pts.is_empty() {
            return None;
        }
        let (mut x1, mut y1, mut x2, mut y2) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in pts {
            x1 = x1.min(k.u);
            y1 = y1.min(k.v);
            x2 = x2.max(k.u);
            y2 = y2.max(k.v);
        }
        let (pw, ph) = (((x2 - x1) * pad).max(4.0), ((y2 - y1) * pad).max(4.0));
        Some(BBox {
            x1: x1 - pw,
            y1: y1 - ph,
            x2: x2 + pw,
            y2: y2 + ph,
        })
    }
}

impl TryFrom<Vec<Keypoint>> for Keypoints17 {
    type Error = Error;
    fn try_from(v: Vec<Keypoint>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Keypoints17> for Vec<Keypoint> {
    fn from(k: Keypoints17) -> Self {
        k.0.to_vec()
    }
}

/// Pixel box, corners inclusive of extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn iou(&self, o: &BBox) -> f64 {
        let w = (self.x2.min(o.x2) - self.x1.max(o.x1)).max(0.0);
        let h = (self.y2.min(o.y2) - self.y1.max(o.y1)).max(0.0);
        let inter = w * h;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseClass {
    Standing,
    Sitting,
    Laying,
    Unknown,
}

impl From<Posture> for PoseClass {
    fn from(p: Posture) -> Self {
        match p {
            Posture::Standing => PoseClass::Standing,
            Posture::Sitting => PoseClass::Sitting,
            Posture::Laying => PoseClass::Laying,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub min_confidence: f64,
    pub min_joints: usize,
    /// Torso tilt from image vertical still counted as upright (deg).
    pub upright_deg: f64,
    /// Torso tilt beyond which the person is laying (deg).
    pub laying_deg: f64,
    /// Hip-to-knee drop, relative to torso length, separating standing from sitting.
    pub knee_drop: f64,
    /// Torso shorter than this fraction of shoulder width reads as lying along the view axis.
    pub foreshortening: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            min_confidence: 0.3,
            min_joints: 6,
            upright_deg: 30.0,
            laying_deg: 60.0,
            knee_drop: 0.4,
            foreshortening: 0.8,
        }
    }
}

const SHOULDERS: [Joint; 2] = [Joint::LeftShoulder, Joint::RightShoulder];
const HIPS: [Joint; 2] = [Joint::LeftHip, Joint::RightHip];
const KNEES: [Joint; 2] = [Joint::LeftKnee, Joint::RightKnee];
const HEAD: [Joint; 5] = [
    Joint::Nose,
    Joint::LeftEye,
    Joint::RightEye,
    Joint::LeftEar,
    Joint::RightEar,
];
const ANKLES: [Joint; 2] = [Joint::LeftAnkle, Joint::RightAnkle];

pub fn classify_pose(kp: &Keypoints17) -> PoseClass {
    classify_pose_with(kp, &ClassifierParams::default())
}

/// Geometric three-way pose rule on image keypoints.
pub fn classify_pose_with(kp: &Keypoints17, p: &ClassifierParams) -> PoseClass {
    let c = p.min_confidence;
    if kp.0.iter().filter(|k| k.confidence >= c).count() < p.min_joints {
        return PoseClass::Unknown;
    }
    let top = kp.centroid(&SHOULDERS, c).or_else(|| kp.centroid(&HEAD, c));
    let hips = kp.centroid(&HIPS, c);
    let bottom = hips
        .or_else(|| kp.centroid(&KNEES, c))
        .or_else(|| kp.centroid(&ANKLES, c));
    let (Some(top), Some(bottom)) = (top, bottom) else {
        return PoseClass::Standing;
    };
    let (du, dv) = (top.0 - bottom.0, top.1 - bottom.1);
    let torso = du.hypot(dv);
    // angle between the hip->shoulder vector and image up (-v)
    let tilt = if torso > 0.0 {
        du.abs().atan2(-dv).to_degrees()
    } else {
        90.0
    };
    let (ls, rs) = (kp.get(Joint::LeftShoulder), kp.get(Joint::RightShoulder));
    let foreshortened =
        ls.confidence >= c && rs.confidence >= c && torso < p.foreshortening * (ls.u - rs.u).hypot(ls.v - rs.v);
    let mid = 0.5 * (p.upright_deg + p.laying_deg);
    if tilt > p.laying_deg || foreshortened || (tilt > p.upright_deg && tilt >= mid) {
        return PoseClass::Laying;
    }
    match (hips, kp.centroid(&KNEES, c)) {
        (Some(h), Some(k)) if torso > 0.0 && (k.1 - h.1) / torso < p.knee_drop => PoseClass::Sitting,
        _ => PoseClass::Standing,
    }
}

/// Body-frame joint positions (forward, left, up) in metres. The torso
/// centroid sits above the origin for every posture.
pub fn template(posture: Posture) -> [[f64; 3]; JOINT_COUNT] {
    match posture {
        Posture::Standing => [
            [0.08, 0.0, 1.62],
            [0.06, 0.03, 1.66],
            [0.06, -0.03, 1.66],
            [0.0, 0.07, 1.63],
            [0.0, -0.07, 1.63],
            [0.0, 0.19, 1.42],
            [0.0, -0.19, 1.42],
            [0.0, 0.22, 1.12],
            [0.0, -0.22, 1.12],
            [0.02, 0.23, 0.85],
            [0.02, -0.23, 0.85],
            [0.0, 0.11, 0.92],
            [0.0, -0.11, 0.92],
            [0.02, 0.11, 0.5],
            [0.02, -0.11, 0.5],
            [0.0, 0.11, 0.08],
            [0.0, -0.11, 0.08],
        ],
        Posture::Sitting => [
            [0.06, 0.0, 1.17],
            [0.04, 0.03, 1.21],
            [0.04, -0.03, 1.21],
            [-0.02, 0.07, 1.18],
            [-0.02, -0.07, 1.18],
            [-0.02, 0.19, 0.97],
            [-0.02, -0.19, 0.97],
            [0.03, 0.22, 0.7],
            [0.03, -0.22, 0.7],
            [0.25, 0.18, 0.55],
            [0.25, -0.18, 0.55],
            [0.02, 0.11, 0.47],
            [0.02, -0.11, 0.47],
            [0.44, 0.12, 0.5],
            [0.44, -0.12, 0.5],
            [0.47, 0.12, 0.08],
            [0.47, -0.12, 0.08],
        ],
        // on the back, head toward +forward
        Posture::Laying => [
            [0.47, 0.0, 0.22],
            [0.5, 0.03, 0.2],
            [0.5, -0.03, 0.2],
            [0.49, 0.07, 0.12],
            [0.49, -0.07, 0.12],
            [0.25, 0.19, 0.12],
            [0.25, -0.19, 0.12],
            [-0.03, 0.24, 0.1],
            [-0.03, -0.24, 0.1],
            [-0.28, 0.25, 0.1],
            [-0.28, -0.25, 0.1],
            [-0.25, 0.11, 0.12],
            [-0.25, -0.11, 0.12],
            [-0.65, 0.11, 0.12],
            [-0.65, -0.11, 0.12],
            [-1.05, 0.11, 0.08],
            [-1.05, -0.11, 0.08],
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(points: &[(f64, f64)], conf: f64) -> Keypoints17 {
        Keypoints17::new(
            points
                .iter()
                .map(|&(u, v)| Keypoint { u, v, confidence: conf })
                .collect(),
        )
        .unwrap()
    }

    // frontal orthographic view: u = cx - left*scale, v = cy - up*scale
    fn ortho(posture: Posture) -> Keypoints17 {
        let pts: Vec<_> = template(posture)
            .iter()
            .map(|p| (320.0 - 100.0 * p[1], 400.0 - 100.0 * p[2]))
            .collect();
        kp(&pts, 0.9)
    }

    #[test]
    fn joint_count_enforced() {
        assert!(Keypoints17::new(vec![Keypoint::default(); 16]).is_err());
        let mut v = vec![Keypoint::default(); 17];
        v[3].confidence = 1.5;
        assert!(Keypoints17::new(v).is_err());
    }

    #[test]
    fn zero_confidence_is_unknown() {
        assert_eq!(classify_pose(&kp(&[(1.0, 2.0); 17], 0.0)), PoseClass::Unknown);
    }

    #[test]
    fn frontal_templates() {
        assert_eq!(classify_pose(&ortho(Posture::Standing)), PoseClass::Standing);
        assert_eq!(classify_pose(&ortho(Posture::Sitting)), PoseClass::Sitting);
    }

    #[test]
    fn horizontal_body_is_laying() {
        let pts: Vec<_> = template(Posture::Laying)
            .iter()
            .map(|p| (320.0 + 100.0 * p[0], 300.0 - 100.0 * p[2] + 5.0 * p[1]))
            .collect();
        assert_eq!(classify_pose(&kp(&pts, 0.9)), PoseClass::Laying);
    }

    #[test]
    fn iou_basics() {
        let a = BBox {
            x1: 0.0,
            y1: 0.0,
            x2: 2.0,
            y2: 2.0,
        };
        let b = BBox {
            x1: 1.0,
            y1: 0.0,
            x2: 3.0,
            y2: 2.0,
        };
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(
            a.iou(&BBox {
                x1: 5.0,
                y1: 5.0,
                x2: 6.0,
                y2: 6.0
            }),
            0.0
        );
    }
}
