//! Concrete bus payloads and the topic registry.
//!
//! Every topic carries exactly one payload kind; the kind string doubles as
//! the wire schema id.

use serde::{Deserialize, Serialize};

use crate::bus::{ActionRequest, Bus, HelpReply, NavGoal, Payload, VelocityCommand};
use crate::grid::OccupancyGrid;
use crate::kinematics::{Pose2D, Twist2D};
use crate::lowlayer::{DeviceTarget, LowLayerTelemetry};
use crate::nav::PersonFollowStatus;
use crate::perception::{BBox, FallAlarm, PersonGoal, PoseClass};
use crate::taskmgr::{TaskCommand, TaskState};
use crate::vocal::{UtteranceFrame, VocalEvent};
use crate::worldsim::{LidarScan, WorldEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EStopCommand {
    /// `true` latches, `false` resets.
    pub latch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceCommand {
    pub target: DeviceTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightsCommand {
    pub on: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelpReplyMessage {
    pub reply: HelpReply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerWord {
    pub word: String,
}

/// Robot state at the velocity rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub pose: Pose2D,
    /// Achieved body twist.
    pub twist: Twist2D,
    /// Twist delivered to the base after arbitration.
    pub command: Twist2D,
    pub low_layer: LowLayerTelemetry,
    pub estop: bool,
    pub task: TaskState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackInfo {
    pub id: u64,
    pub bbox: BBox,
    pub class: PoseClass,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackList {
    pub tracks: Vec<TrackInfo>,
    pub target: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallEvent {
    pub track: u64,
    pub alarm: FallAlarm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavPath {
    pub poses: Vec<Pose2D>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum NavStatus {
    Idle,
    Navigating,
    Reached,
    NoPath,
    Following { status: PersonFollowStatus },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Message {
    ActionRequest(ActionRequest),
    VelocityCommand(VelocityCommand),
    EstopCommand(EStopCommand),
    DeviceCommand(DeviceCommand),
    LightsCommand(LightsCommand),
    UtteranceFrame(UtteranceFrame),
    HelpReply(HelpReplyMessage),
    TriggerWord(TriggerWord),
    Telemetry(Box<Telemetry>),
    LidarScan(LidarScan),
    TrackList(TrackList),
    PersonGoal(PersonGoal),
    FallEvent(FallEvent),
    VocalEvent(VocalEvent),
    TaskEvent(TaskCommand),
    NavGoal(NavGoal),
    NavPath(NavPath),
    NavStatus(NavStatus),
    WorldEvent(WorldEvent),
    Map(OccupancyGrid),
}

impl Payload for Message {
    fn kind(&self) -> &'static str {
        match self {
            Message::ActionRequest(_) => "action_request",
            Message::VelocityCommand(_) => "velocity_command",
            Message::EstopCommand(_) => "estop_command",
            Message::DeviceCommand(_) => "device_command",
            Message::LightsCommand(_) => "lights_command",
            Message::UtteranceFrame(_) => "utterance_frame",
            Message::HelpReply(_) => "help_reply",
            Message::TriggerWord(_) => "trigger_word",
            Message::Telemetry(_) => "telemetry",
            Message::LidarScan(_) => "lidar_scan",
            Message::TrackList(_) => "track_list",
            Message::PersonGoal(_) => "person_goal",
            Message::FallEvent(_) => "fall_event",
            Message::VocalEvent(_) => "vocal_event",
            Message::TaskEvent(_) => "task_event",
            Message::NavGoal(_) => "nav_goal",
            Message::NavPath(_) => "nav_path",
            Message::NavStatus(_) => "nav_status",
            Message::WorldEvent(_) => "world_event",
            Message::Map(_) => "map",
        }
    }
}

pub mod topics {
    pub const ACTIONS: &str = "actions";
    pub const CMD_VEL_MANUAL: &str = "cmd_vel/manual";
    pub const CMD_VEL_AUTO: &str = "cmd_vel/auto";
    pub const ESTOP: &str = "estop";
    pub const DEVICE: &str = "device/cmd";
    pub const LIGHTS: &str = "lights";
    pub const UTTERANCE: &str = "utterance";
    pub const HELP_REPLY: &str = "help_reply";
    pub const TRIGGER_WORD: &str = "trigger_word";
    pub const TELEMETRY: &str = "telemetry";
    pub const SCAN: &str = "scan";
    pub const TRACKS: &str = "tracks";
    pub const PERSON_GOAL: &str = "person_goal";
    pub const FALL: &str = "fall";
    pub const VOCAL: &str = "vocal";
    pub const TASK: &str = "task";
    pub const NAV_GOAL: &str = "nav/goal";
    pub const NAV_PATH: &str = "nav/path";
    pub const NAV_STATUS: &str = "nav/status";
    pub const WORLD: &str = "world";
    pub const MAP: &str = "map";
}

/// `(topic, kind)` for every topic.
pub const REGISTRY: &[(&str, &str)] = &[
    (topics::ACTIONS, "action_request"),
    (topics::CMD_VEL_MANUAL, "velocity_command"),
    (topics::CMD_VEL_AUTO, "velocity_command"),
    (topics::ESTOP, "estop_command"),
    (topics::DEVICE, "device_command"),
    (topics::LIGHTS, "lights_command"),
    (topics::UTTERANCE, "utterance_frame"),
    (topics::HELP_REPLY, "help_reply"),
    (topics::TRIGGER_WORD, "trigger_word"),
    (topics::TELEMETRY, "telemetry"),
    (topics::SCAN, "lidar_scan"),
    (topics::TRACKS, "track_list"),
    (topics::PERSON_GOAL, "person_goal"),
    (topics::FALL, "fall_event"),
    (topics::VOCAL, "vocal_event"),
    (topics::TASK, "task_event"),
    (topics::NAV_GOAL, "nav_goal"),
    (topics::NAV_PATH, "nav_path"),
    (topics::NAV_STATUS, "nav_status"),
    (topics::WORLD, "world_event"),
    (topics::MAP, "map"),
];

/// Topics external clients may publish on.
pub const COMMAND_TOPICS: &[&str] = &[
    topics::ACTIONS,
    topics::CMD_VEL_MANUAL,
    topics::ESTOP,
    topics::DEVICE,
    topics::UTTERANCE,
    topics::HELP_REPLY,
    topics::TRIGGER_WORD,
];

pub fn is_command_topic(topic: &str) -> bool {
    COMMAND_TOPICS.contains(&topic)
}

/// A bus with every topic in [`REGISTRY`] registered.
pub fn marvin_bus() -> Bus<Message> {
    let bus = Bus::new();
    for (topic, kind) in REGISTRY {
        bus.register(topic, kind);
    }
    bus
}
