//! The full robot stack wired over one bus and driven by the simulator clock.
//!
//! Each tick runs the nodes in a fixed order: vocal, perception (decimated),
//! task manager, navigation, then the serial node, which arbitrates velocity,
//! drives the low layer and steps the world.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bus::{
    arbitrate_velocity, ActionKind, ActionRequest, Bus, EStop, Envelope, NavGoal, Publisher, RequestSource,
    Subscription, VelocityCommand, VelocitySource,
};
use crate::config::MarvinConfig;
use crate::error::Result;
use crate::grid::OccupancyGrid;
use crate::kinematics::{clamp_to_octahedron, Pose2D, Twist2D};
use crate::lowlayer::{DeviceState, LowLayer};
use crate::messages::{
    marvin_bus, topics, FallEvent, HelpReplyMessage, Message, NavPath, NavStatus, Telemetry, TrackInfo, TrackList,
};
use crate::nav::follow::{plan_toward, PersonFollowStatus};
use crate::nav::{build_costmap, follow_path, mapper_update, Costmap, Gaze, MapperState, PersonFix, PersonFollower};
use crate::perception::skeleton::classify_pose_with;
use crate::perception::{project_goal, select_target, synth_detect, FallMonitor, SortTracker};
use crate::taskmgr::{PoiRegistry, TaskCommand, TaskManager};
use crate::vocal::{Intent, IntentCatalogue, VocalEvent, VocalNode};
use crate::worldsim::{PersonAgent, World};

const COMMAND_DEPTH: usize = 1024;

/// Everything needed to build a stack.
#[derive(Debug, Clone)]
pub struct StackSetup {
    pub grid: OccupancyGrid,
    pub start: Pose2D,
    pub persons: Vec<PersonAgent>,
    pub pois: PoiRegistry,
    pub catalogue: IntentCatalogue,
    pub seed: u64,
    /// Run the occupancy mapper on every scan.
    pub mapping: bool,
}

#[derive(Debug, Clone)]
enum NavMode {
    Idle,
    Goal { goal: NavGoal, path: Option<Vec<Pose2D>> },
    Follow,
}

struct Subs {
    estop: Subscription<Message>,
    lights: Subscription<Message>,
    device: Subscription<Message>,
    manual: Subscription<Message>,
    auto: Subscription<Message>,
    utterance: Subscription<Message>,
    trigger: Subscription<Message>,
    help_reply: Subscription<Message>,
    actions: Subscription<Message>,
    nav_status: Subscription<Message>,
}

struct Pubs {
    serial: Publisher<Message>,
    vocal: Publisher<Message>,
    perception: Publisher<Message>,
    tasks: Publisher<Message>,
    nav: Publisher<Message>,
    world: Publisher<Message>,
}

pub struct Stack {
    pub config: MarvinConfig,
    pub bus: Bus<Message>,
    pub world: World,
    pub low_layer: LowLayer,
    pub estop: EStop,
    pub tasks: TaskManager,
    pub vocal: VocalNode,
    pub tracker: SortTracker,
    pub mapper: Option<MapperState>,
    monitors: BTreeMap<u64, FallMonitor>,
    follower: PersonFollower,
    mode: NavMode,
    nav_status: NavStatus,
    costmap: Option<Costmap>,
    person_fix: Option<PersonFix>,
    manual: Option<VelocityCommand>,
    autonomous: Option<VelocityCommand>,
    command: Twist2D,
    tick: u64,
    lidar_rng: ChaCha8Rng,
    camera_rng: ChaCha8Rng,
    subs: Subs,
    pubs: Pubs,
}

fn twist_of(env: &Envelope<Message>) -> Option<VelocityCommand> {
    match &env.payload {
        Message::VelocityCommand(v) if v.twist.is_finite() => Some(*v),
        _ => None,
    }
}

impl Stack {
    pub fn new(config: MarvinConfig, setup: StackSetup) -> Result<Self> {
        config.validate()?;
        let bus = marvin_bus();
        let sub = |t: &str| bus.subscribe_with_depth(t, COMMAND_DEPTH);
        let subs = Subs {
            estop: sub(topics::ESTOP)?,
            lights: sub(topics::LIGHTS)?,
            device: sub(topics::DEVICE)?,
            manual: sub(topics::CMD_VEL_MANUAL)?,
            auto: sub(topics::CMD_VEL_AUTO)?,
            utterance: sub(topics::UTTERANCE)?,
            trigger: sub(topics::TRIGGER_WORD)?,
            help_reply: sub(topics::HELP_REPLY)?,
            actions: sub(topics::ACTIONS)?,
            nav_status: sub(topics::NAV_STATUS)?,
        };
        let pubs = Pubs {
            serial: bus.publisher("serial"),
            vocal: bus.publisher("vocal"),
            perception: bus.publisher("perception"),
            tasks: bus.publisher("taskmgr"),
            nav: bus.publisher("nav"),
            world: bus.publisher("world"),
        };
        let mut world = World::new(setup.grid, setup.start, config.body)?;
        world.persons = setup.persons;
        let mapper = setup
            .mapping
            .then(|| MapperState::new(world.grid.geometry(), config.mapper));
        let pois: Vec<String> = setup.pois.names().map(str::to_string).collect();
        let seed = setup.seed;
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Ok(Self {
            bus,
            world,
            low_layer: LowLayer::new(config.low_layer, config.chassis, DeviceState::default()),
            estop: EStop::default(),
            tasks: TaskManager::new(setup.pois, config.task),
            vocal: VocalNode::new(setup.catalogue, config.vocal, pois),
            tracker: SortTracker::new(config.sort),
            mapper,
            monitors: BTreeMap::new(),
            follower: PersonFollower::new(),
            mode: NavMode::Idle,
            nav_status: NavStatus::Idle,
            costmap: None,
            person_fix: None,
            manual: None,
            autonomous: None,
            command: Twist2D::ZERO,
            tick: 0,
            lidar_rng: stream(1),
            camera_rng: stream(2),
            subs,
            pubs,
            config,
        })
    }

    /// Simulation time at the start of the next tick.
    pub fn now(&self) -> f64 {
        self.tick as f64 * self.config.rates.dt()
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    /// Twist delivered to the base on the last tick.
    pub fn command(&self) -> Twist2D {
        self.command
    }

    pub fn nav_status(&self) -> NavStatus {
        self.nav_status
    }

    pub fn person_fix(&self) -> Option<PersonFix> {
        self.person_fix
    }

    fn due(&self, hz: f64) -> bool {
        let k = self.config.rates.decimation(hz);
        k > 0 && self.tick.is_multiple_of(k)
    }

    /// Runs one velocity tick.
    pub fn step(&mut self) -> Result<()> {
        let now = self.now();
        self.bus.set_clock(now);
        self.vocal_node(now)?;
        if self.due(self.config.rates.perception) {
            self.perception_node(now)?;
        }
        self.task_node(now)?;
        self.nav_node(now)?;
        self.serial_node(now)?;
        self.tick += 1;
        Ok(())
    }

    pub fn run_until(&mut self, t: f64) -> Result<()> {
        let eps = 1e-9;
        while self.now() < t - eps {
            self.step()?;
        }
        Ok(())
    }

    fn vocal_node(&mut self, _now: f64) -> Result<()> {
        for env in self.subs.trigger.drain() {
            if let Message::TriggerWord(w) = env.payload {
                // an unknown word leaves the trigger unchanged
                let _ = self.vocal.set_trigger(&w.word);
            }
        }
        for env in self.subs.utterance.drain() {
            let Message::UtteranceFrame(frame) = env.payload else {
                continue;
            };
            for ev in self.vocal.process(&frame) {
                if let VocalEvent::Matched { intent, .. } = &ev {
                    match intent {
                        Intent::Action(kind) => {
                            if let Ok(req) = ActionRequest::new(kind.clone(), RequestSource::Vocal) {
                                self.pubs.vocal.publish(topics::ACTIONS, Message::ActionRequest(req))?;
                            }
                        }
                        Intent::Reply(reply) => {
                            self.pubs.vocal.publish(
                                topics::HELP_REPLY,
                                Message::HelpReply(HelpReplyMessage { reply: *reply }),
                            )?;
                        }
                    }
                }
                self.pubs.vocal.publish(topics::VOCAL, Message::VocalEvent(ev))?;
            }
        }
        Ok(())
    }

    fn perception_node(&mut self, now: f64) -> Result<()> {
        let dev = self.low_layer.device();
        let camera = self.config.camera.mounted(dev.linear_pos, dev.tilt_pos);
        let detections = synth_detect(&self.world, &camera, Some(&mut self.camera_rng));
        let boxes: Vec<_> = detections.iter().map(|d| d.bbox).collect();
        let ids = self.tracker.update(&boxes);
        let live: Vec<u64> = self.tracker.tracks.iter().map(|t| t.id).collect();
        self.monitors.retain(|id, _| live.contains(id));
        let sort = self.config.sort;
        let mut infos = Vec::with_capacity(detections.len());
        for (det, &id) in detections.iter().zip(&ids) {
            let class = classify_pose_with(&det.keypoints, &self.config.classifier);
            let confirmed = self.tracker.track(id).is_some_and(|t| t.confirmed(&sort));
            let fall = self.config.fall;
            let alarm = self
                .monitors
                .entry(id)
                .or_insert_with(|| FallMonitor::new(fall))
                .update(class, now);
            if let (Some(alarm), true) = (alarm, confirmed) {
                self.pubs
                    .perception
                    .publish(topics::FALL, Message::FallEvent(FallEvent { track: id, alarm }))?;
                let req = ActionRequest::new(ActionKind::HelpRequest, RequestSource::Monitor)?;
                self.pubs
                    .perception
                    .publish(topics::ACTIONS, Message::ActionRequest(req))?;
            }
            infos.push(TrackInfo {
                id,
                bbox: det.bbox,
                class,
                confirmed,
            });
        }
        let target = select_target(&self.tracker.tracks, &sort);
        if let Some(k) = target.and_then(|t| ids.iter().position(|id| *id == t)) {
            let det = &detections[k];
            if let Some(goal) = det
                .torso_depth()
                .and_then(|d| project_goal(&det.keypoints, d, &camera, now).ok())
            {
                let (x, y) = self.world.robot.pose.to_world(goal.x, goal.y);
                self.person_fix = Some(PersonFix { x, y, stamp: now });
                self.pubs
                    .perception
                    .publish(topics::PERSON_GOAL, Message::PersonGoal(goal))?;
            }
        }
        self.pubs
            .perception
            .publish(topics::TRACKS, Message::TrackList(TrackList { tracks: infos, target }))?;
        Ok(())
    }

    fn task_node(&mut self, now: f64) -> Result<()> {
        let mut out: Vec<TaskCommand> = Vec::new();
        for env in self.subs.nav_status.drain() {
            match env.payload {
                Message::NavStatus(NavStatus::Reached) => out.extend(self.tasks.goal_reached(now)),
                Message::NavStatus(NavStatus::NoPath) => {
                    out.extend(self.tasks.fail_active("I cannot find a way there."))
                }
                Message::NavStatus(NavStatus::Following {
                    status: PersonFollowStatus::SearchTimeout,
                }) => out.extend(self.tasks.fail_active("I lost sight of you.")),
                _ => {}
            }
        }
        for env in self.subs.actions.drain() {
            if let Message::ActionRequest(req) = env.payload {
                out.extend(self.tasks.handle_action(&req, now));
            }
        }
        for env in self.subs.help_reply.drain() {
            if let Message::HelpReply(r) = env.payload {
                out.extend(self.tasks.help_reply(r.reply, now));
            }
        }
        out.extend(self.tasks.tick(now));
        for cmd in out {
            match &cmd {
                TaskCommand::Abort { .. } => self.mode = NavMode::Idle,
                TaskCommand::Goal { goal, .. } => {
                    self.pubs.tasks.publish(topics::NAV_GOAL, Message::NavGoal(*goal))?;
                    self.mode = NavMode::Goal {
                        goal: *goal,
                        path: None,
                    };
                }
                TaskCommand::StartFollow => {
                    self.follower = PersonFollower::new();
                    self.mode = NavMode::Follow;
                }
                TaskCommand::Lights { on } => {
                    self.pubs.tasks.publish(
                        topics::LIGHTS,
                        Message::LightsCommand(crate::messages::LightsCommand { on: *on }),
                    )?;
                }
                _ => {}
            }
            self.pubs.tasks.publish(topics::TASK, Message::TaskEvent(cmd))?;
        }
        Ok(())
    }

    fn set_status(&mut self, status: NavStatus) -> Result<()> {
        if status != self.nav_status {
            self.nav_status = status;
            self.pubs.nav.publish(topics::NAV_STATUS, Message::NavStatus(status))?;
        }
        Ok(())
    }

    fn nav_node(&mut self, now: f64) -> Result<()> {
        let pose = self.world.robot.pose;
        if self.due(self.config.rates.lidar) {
            let scan = self.world.scan(&self.config.lidar, Some(&mut self.lidar_rng))?;
            if let Some(m) = self.mapper.as_mut() {
                mapper_update(m, &pose, &scan);
            }
            self.costmap = Some(build_costmap(
                &scan,
                &pose,
                &self.world.grid.geometry(),
                &self.config.costmap,
            ));
            self.pubs.nav.publish(topics::SCAN, Message::LidarScan(scan))?;
        }
        if let Some(m) = &self.mapper {
            if self.due(self.config.rates.map) {
                self.pubs.nav.publish(topics::MAP, Message::Map(m.to_grid()))?;
            }
        }
        let replan = self.due(self.config.rates.replan);
        let chassis = self.config.chassis;
        let mode = std::mem::replace(&mut self.mode, NavMode::Idle);
        let (twist, next) = match mode {
            NavMode::Idle => {
                self.set_status(NavStatus::Idle)?;
                return Ok(());
            }
            NavMode::Goal { goal, mut path } => {
                let Some(costmap) = &self.costmap else {
                    self.mode = NavMode::Goal { goal, path };
                    return Ok(());
                };
                if path.is_none() || replan {
                    let Some(p) = plan_toward(costmap, &pose, (goal.pose.x, goal.pose.y)) else {
                        self.set_status(NavStatus::NoPath)?;
                        return Ok(());
                    };
                    let mut poses = p.poses;
                    poses.push(goal.pose);
                    let msg = NavPath {
                        poses: poses.clone(),
                        cost: p.cost,
                    };
                    self.pubs.nav.publish(topics::NAV_PATH, Message::NavPath(msg))?;
                    path = Some(poses);
                }
                let poses = path.as_deref().unwrap_or_default();
                let mut fp = self.config.follow;
                fp.v_max = fp.v_max.min(goal.speed_cap);
                let out = follow_path(
                    poses,
                    &pose,
                    Gaze::Heading(goal.pose.yaw),
                    Some(goal.pose.yaw),
                    &fp,
                    &chassis,
                )?;
                if out.reached {
                    self.set_status(NavStatus::Reached)?;
                    (out.twist, NavMode::Idle)
                } else {
                    self.set_status(NavStatus::Navigating)?;
                    (out.twist, NavMode::Goal { goal, path })
                }
            }
            NavMode::Follow => {
                let Some(costmap) = &self.costmap else {
                    self.mode = NavMode::Follow;
                    return Ok(());
                };
                let out = self.follower.follow_person(
                    self.person_fix.as_ref(),
                    &pose,
                    now,
                    costmap,
                    &self.config.person_follow,
                    &chassis,
                );
                if replan {
                    if let Some(p) = self.follower.path() {
                        let msg = NavPath {
                            poses: p.poses.clone(),
                            cost: p.cost,
                        };
                        self.pubs.nav.publish(topics::NAV_PATH, Message::NavPath(msg))?;
                    }
                }
                self.set_status(NavStatus::Following { status: out.status })?;
                let next = if out.status == PersonFollowStatus::SearchTimeout {
                    NavMode::Idle
                } else {
                    NavMode::Follow
                };
                (out.twist, next)
            }
        };
        self.mode = next;
        self.pubs.nav.publish(
            topics::CMD_VEL_AUTO,
            Message::VelocityCommand(VelocityCommand {
                twist,
                source: VelocitySource::Autonomous,
                stamp: now,
            }),
        )?;
        Ok(())
    }

    fn serial_node(&mut self, now: f64) -> Result<()> {
        for env in self.subs.estop.drain() {
            let Message::EstopCommand(cmd) = env.payload else {
                continue;
            };
            if cmd.latch {
                if self.estop.set() {
                    let req = ActionRequest::new(ActionKind::Stop, RequestSource::Manual)?;
                    self.pubs.serial.publish(topics::ACTIONS, Message::ActionRequest(req))?;
                }
            } else {
                self.estop.reset();
            }
        }
        for env in self.subs.lights.drain() {
            if let Message::LightsCommand(l) = env.payload {
                self.low_layer.set_lights(l.on);
            }
        }
        for env in self.subs.device.drain() {
            if let Message::DeviceCommand(d) = env.payload {
                // a busy or unhomed device ignores the request
                let _ = self.low_layer.command_device(d.target);
            }
        }
        if let Some(v) = self.subs.manual.drain().iter().rev().find_map(twist_of) {
            self.manual = Some(v);
        }
        if let Some(v) = self.subs.auto.drain().iter().rev().find_map(twist_of) {
            self.autonomous = Some(v);
        }
        let arbitrated = arbitrate_velocity(
            self.manual.as_ref(),
            self.autonomous.as_ref(),
            self.estop.is_latched(),
            now,
            &self.config.arbiter,
        );
        self.command = clamp_to_octahedron(&self.config.chassis, &arbitrated);
        let dt = self.config.rates.dt();
        let low = self.low_layer.tick(&self.command, dt)?;
        self.world.command(self.command);
        let events = self.world.step(dt)?;
        let after = (self.tick + 1) as f64 * dt;
        for ev in events {
            self.pubs
                .world
                .publish_at(topics::WORLD, Message::WorldEvent(ev), after)?;
        }
        let telemetry = Telemetry {
            pose: self.world.robot.pose,
            twist: self.world.robot.twist,
            command: self.command,
            low_layer: low,
            estop: self.estop.is_latched(),
            task: self.tasks.state.clone(),
        };
        self.pubs
            .serial
            .publish_at(topics::TELEMETRY, Message::Telemetry(Box::new(telemetry)), after)?;
        Ok(())
    }
}
