//! Costmaps, planning, path and person following, and occupancy mapping.

pub mod costmap;
pub mod follow;
pub mod mapfile;
pub mod mapper;
pub mod planner;

pub use costmap::{build_costmap, Costmap, CostmapConfig, LETHAL};
pub use follow::{
    follow_path, FollowOutput, FollowParams, Gaze, PersonFix, PersonFollowParams, PersonFollowStatus, PersonFollower,
};
pub use mapfile::{load_map, save_map};
pub use mapper::{mapper_update, MapperConfig, MapperState};
pub use planner::{plan, plan_cells, PathCost, PlannedPath};
