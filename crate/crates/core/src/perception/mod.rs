//! Person pipeline: skeleton detection, pose classification, tracking,
//! goal projection and fall monitoring.

pub mod camera;
pub mod detect;
pub mod fall;
pub mod skeleton;
pub mod sort;

pub use camera::{CameraModel, CameraMount};
pub use detect::{project_goal, synth_detect, Detection, PersonGoal};
pub use fall::{FallAlarm, FallMonitor, FallParams};
pub use skeleton::{classify_pose, BBox, Joint, Keypoint, Keypoints17, PoseClass};
pub use sort::{associate, select_target, SortParams, SortTracker, Track};
