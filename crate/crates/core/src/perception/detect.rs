use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::OccupancyGrid;
use crate::kinematics::Pose2D;
use crate::perception::camera::CameraModel;
use crate::perception::skeleton::{template, BBox, Joint, Keypoint, Keypoints17, JOINT_COUNT};
use crate::worldsim::{PersonAgent, Posture, World};

pub const PIXEL_NOISE: f64 = 2.0;
pub const DETECTION_CONFIDENCE: f64 = 0.9;
/// Body thickness around each joint when boxing a detection (m).
pub const LIMB_RADIUS: f64 = 0.15;
const TORSO: [Joint; 4] = [
    Joint::LeftShoulder,
    Joint::RightShoulder,
    Joint::LeftHip,
    Joint::RightHip,
];

/// One detected skeleton with the aligned depth of every joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub keypoints: Keypoints17,
    pub depths: [f64; JOINT_COUNT],
    pub bbox: BBox,
    /// Index of the source person in the world (simulation ground truth).
    pub person: usize,
}

impl Detection {
    /// Depth image value at the torso centroid.
    pub fn torso_depth(&self) -> Option<f64> {
        let ds: Vec<f64> = TORSO
            .iter()
            .filter(|j| self.keypoints.get(**j).confidence > 0.0)
            .map(|j| self.depths[*j as usize])
            .collect();
        (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64)
    }
}

/// Posture template joints placed at `person` (robot frame).
fn joint_points(person: &Pose2D, posture: Posture) -> Vec<[f64; 3]> {
    let (s, c) = person.yaw.sin_cos();
    template(posture)
        .iter()
        .map(|j| [person.x + c * j[0] - s * j[1], person.y + s * j[0] + c * j[1], j[2]])
        .collect()
}

/// Image box around the visible joints thickened by [`LIMB_RADIUS`], clipped
/// to the image. Unlike a box over bare keypoints its width does not collapse
/// when the person turns side-on.
pub fn body_bbox(camera: &CameraModel, person: &Pose2D, posture: Posture, keypoints: &Keypoints17) -> Option<BBox> {
    let r = LIMB_RADIUS;
    let (mut x1, mut y1, mut x2, mut y2) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (p, k) in joint_points(person, posture).iter().zip(keypoints.points().iter()) {
        if k.confidence <= 0.0 {
            continue;
        }
        for (dx, dy, dz) in [
            (r, 0.0, 0.0),
            (-r, 0.0, 0.0),
            (0.0, r, 0.0),
            (0.0, -r, 0.0),
            (0.0, 0.0, r),
            (0.0, 0.0, -r),
        ] {
            if let Some((u, v, _)) = camera.project([p[0] + dx, p[1] + dy, p[2] + dz]) {
                x1 = x1.min(u);
                y1 = y1.min(v);
                x2 = x2.max(u);
                y2 = y2.max(v);
            }
        }
    }
    let (w, h) = (camera.width as f64, camera.height as f64);
    let b = BBox {
        x1: x1.max(0.0),
        y1: y1.max(0.0),
        x2: x2.min(w),
        y2: y2.min(h),
    };
    (b.x2 > b.x1 && b.y2 > b.y1).then_some(b)
}

/// Projects a posture template standing at `person` (robot frame) into the image.
pub fn project_skeleton<R: Rng + ?Sized>(
    camera: &CameraModel,
    person: &Pose2D,
    posture: Posture,
    noise: Option<(&mut R, f64)>,
) -> Option<(Keypoints17, [f64; JOINT_COUNT])> {
    let mut pts = Vec::with_capacity(JOINT_COUNT);
    let mut depths = [0.0; JOINT_COUNT];
    for (i, p) in joint_points(person, posture).into_iter().enumerate() {
        let (u, v, d) = camera.project(p)?;
        depths[i] = d;
        pts.push((u, v));
    }
    if let Some((rng, sigma)) = noise {
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("sigma is positive");
            for p in pts.iter_mut() {
                p.0 += n.sample(rng);
                p.1 += n.sample(rng);
            }
        }
    }
    let kps = pts
        .into_iter()
        .map(|(u, v)| Keypoint {
            u,
            v,
            confidence: if camera.in_image(u, v) {
                DETECTION_CONFIDENCE
            } else {
                0.0
            },
        })
        .collect();
    Some((Keypoints17::new(kps).ok()?, depths))
}

/// True when `person` is in front of the camera, inside the horizontal field
/// of view and depth range, and not hidden by a wall.
pub fn person_visible(grid: &OccupancyGrid, robot: &Pose2D, camera: &CameraModel, person: &PersonAgent) -> bool {
    let (lx, ly) = robot.to_local(person.pose.x, person.pose.y);
    let Some((u, _, depth)) = camera.project([lx, ly, camera.mount.z]) else {
        return false;
    };
    if depth > camera.max_depth || u < 0.0 || u >= camera.width as f64 {
        return false;
    }
    let (cx, cy) = robot.to_world(camera.mount.x, camera.mount.y);
    grid.line_of_sight((cx, cy), (person.pose.x, person.pose.y))
}

/// Synthetic skeleton detector over the simulated persons.
pub fn synth_detect<R: Rng + ?Sized>(world: &World, camera: &CameraModel, mut rng: Option<&mut R>) -> Vec<Detection> {
    let robot = world.robot.pose;
    let mut out = Vec::new();
    for (idx, person) in world.persons.iter().enumerate() {
        if !person_visible(&world.grid, &robot, camera, person) {
            continue;
        }
        let (lx, ly) = robot.to_local(person.pose.x, person.pose.y);
        let local = Pose2D::new(lx, ly, person.pose.yaw - robot.yaw);
        let noise = rng.as_deref_mut().map(|r| (r, PIXEL_NOISE));
        let Some((keypoints, depths)) = project_skeleton(camera, &local, person.posture, noise) else {
            continue;
        };
        let Some(bbox) = body_bbox(camera, &local, person.posture, &keypoints) else {
            continue;
        };
        out.push(Detection {
            keypoints,
            depths,
            bbox,
            person: idx,
        });
    }
    out
}

/// Robot-frame position of a tracked person.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonGoal {
    pub x: f64,
    pub y: f64,
    pub stamp: f64,
}

/// Back-projects the torso centroid at the given depth into the robot frame.
pub fn project_goal(kp: &Keypoints17, depth: f64, camera: &CameraModel, stamp: f64) -> Result<PersonGoal> {
    if !(depth > 0.0 && depth <= camera.max_depth) {
        return Err(Error::NoGoal(format!(
            "depth {depth} outside (0, {}]",
            camera.max_depth
        )));
    }
    let (u, v) = kp
        .centroid(&TORSO, 0.3)
        .ok_or_else(|| Error::NoGoal("no confident torso joints".into()))?;
    let p = camera.back_project(u, v, depth);
    Ok(PersonGoal {
        x: p[0],
        y: p[1],
        stamp,
    })
}
