//! Task manager: one active task at a time, help confirmation protocol and
//! night-assist orchestration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bus::{ActionKind, ActionRequest, HelpReply, NavGoal, RequestSource};
use crate::error::{Error, Result};
use crate::kinematics::Pose2D;
use crate::vocal::HELP_PROMPT;

/// Named poses in the home. Names are trimmed, lowercased and single-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRegistry {
    pois: BTreeMap<String, Pose2D>,
}

#[derive(Deserialize)]
struct PoiEntry {
    x: f64,
    y: f64,
    #[serde(default)]
    yaw: f64,
}

#[derive(Deserialize)]
struct PoiFile {
    poi: BTreeMap<String, PoiEntry>,
}

pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl PoiRegistry {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Pose2D)>,
        S: AsRef<str>,
    {
        let mut pois = BTreeMap::new();
        for (name, pose) in entries {
            let key = normalize_name(name.as_ref());
            if key.is_empty() {
                return Err(Error::invalid("empty point of interest name"));
            }
            if pois.insert(key.clone(), pose).is_some() {
                return Err(Error::invalid(format!("duplicate point of interest '{key}'")));
            }
        }
        if !pois.contains_key("dock") {
            return Err(Error::invalid("registry must define 'dock'"));
        }
        Ok(Self { pois })
    }

    /// Parses `[poi.<name>]` tables with `x`, `y` and optional `yaw`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: PoiFile = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("poi registry: {e}")))?;
        Self::new(f.poi.into_iter().map(|(n, e)| (n, Pose2D::new(e.x, e.y, e.yaw))))
    }

    pub fn get(&self, name: &str) -> Option<Pose2D> {
        self.pois.get(&normalize_name(name)).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.pois.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Pose2D)> {
        self.pois.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum TaskPhase {
    Idle,
    Running,
    AwaitHelpConfirm { deadline: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub active: Option<ActionRequest>,
    pub phase: TaskPhase,
    /// Task put on hold while a help confirmation is pending.
    pub suspended: Option<ActionRequest>,
}

impl Default for TaskState {
    fn default() -> Self {
        Self {
            active: None,
            phase: TaskPhase::Idle,
            suspended: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskParams {
    pub help_timeout: f64,
    pub nav_speed_cap: f64,
    pub night_speed_cap: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            help_timeout: 10.0,
            nav_speed_cap: 1.5,
            night_speed_cap: 0.5,
        }
    }
}

/// Side effects requested by the task manager, in emission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum TaskCommand {
    Abort { task: String },
    Activate { task: ActionKind },
    Goal { goal: NavGoal, poi: String },
    StartFollow,
    Lights { on: bool },
    Say { text: String },
    HelpDispatched { trigger: RequestSource },
    Completed { task: String },
}

#[derive(Debug, Clone)]
pub struct TaskManager {
    pub registry: PoiRegistry,
    pub params: TaskParams,
    pub state: TaskState,
}

impl TaskManager {
    pub fn new(registry: PoiRegistry, params: TaskParams) -> Self {
        Self {
            registry,
            params,
            state: TaskState::default(),
        }
    }

    pub fn active_kind(&self) -> Option<&ActionKind> {
        self.state.active.as_ref().map(|a| &a.kind)
    }

    fn teardown(&mut self, out: &mut Vec<TaskCommand>) {
        if let Some(a) = self.state.active.take() {
            out.push(TaskCommand::Abort {
                task: a.kind.name().into(),
            });
            if matches!(a.kind, ActionKind::NightAssist { .. }) {
                out.push(TaskCommand::Lights { on: false });
            }
        }
        self.state.phase = TaskPhase::Idle;
    }

    fn start(&mut self, req: ActionRequest, out: &mut Vec<TaskCommand>) {
        let kind = req.kind.clone();
        out.push(TaskCommand::Activate { task: kind.clone() });
        match &kind {
            ActionKind::NavigateTo { poi } | ActionKind::NightAssist { poi } => {
                let night = matches!(kind, ActionKind::NightAssist { .. });
                if night {
                    out.push(TaskCommand::Lights { on: true });
                }
                let pose = self.registry.get(poi).expect("poi checked before start");
                let cap = if night {
                    self.params.night_speed_cap
                } else {
                    self.params.nav_speed_cap
                };
                out.push(TaskCommand::Goal {
                    goal: NavGoal { pose, speed_cap: cap },
                    poi: normalize_name(poi),
                });
            }
            ActionKind::GoAway => {
                let pose = self.registry.get("dock").expect("registry always has a dock");
                out.push(TaskCommand::Goal {
                    goal: NavGoal {
                        pose,
                        speed_cap: self.params.nav_speed_cap,
                    },
                    poi: "dock".into(),
                });
            }
            ActionKind::Follow => out.push(TaskCommand::StartFollow),
            ActionKind::HelpRequest | ActionKind::Stop => {}
        }
        self.state.active = Some(req);
        self.state.phase = TaskPhase::Running;
    }

    /// Consumes one request from the Actions topic.
    pub fn handle_action(&mut self, req: &ActionRequest, now: f64) -> Vec<TaskCommand> {
        let mut out = Vec::new();
        if let Some(poi) = req.kind.poi() {
            if self.registry.get(poi).is_none() {
                out.push(TaskCommand::Say {
                    text: format!("Sorry, I do not know where the {poi} is."),
                });
                return out;
            }
        }
        match req.kind {
            ActionKind::Stop => {
                self.teardown(&mut out);
                self.state.suspended = None;
            }
            ActionKind::HelpRequest if req.source == RequestSource::Monitor => {
                out.push(TaskCommand::HelpDispatched {
                    trigger: RequestSource::Monitor,
                });
            }
            ActionKind::HelpRequest => {
                if matches!(self.state.phase, TaskPhase::AwaitHelpConfirm { .. }) {
                    return out;
                }
                let prior = self.state.active.clone();
                self.teardown(&mut out);
                self.state.suspended = prior;
                out.push(TaskCommand::Activate {
                    task: ActionKind::HelpRequest,
                });
                out.push(TaskCommand::Say {
                    text: HELP_PROMPT.into(),
                });
                self.state.active = Some(req.clone());
                self.state.phase = TaskPhase::AwaitHelpConfirm {
                    deadline: now + self.params.help_timeout,
                };
            }
            _ => {
                self.teardown(&mut out);
                self.state.suspended = None;
                self.start(req.clone(), &mut out);
            }
        }
        out
    }

    /// User answer while a confirmation is pending; ignored otherwise.
    pub fn help_reply(&mut self, reply: HelpReply, _now: f64) -> Vec<TaskCommand> {
        let mut out = Vec::new();
        if !matches!(self.state.phase, TaskPhase::AwaitHelpConfirm { .. }) {
            return out;
        }
        match reply {
            HelpReply::Confirm => self.dispatch(&mut out),
            HelpReply::Deny => {
                self.state.active = None;
                self.state.phase = TaskPhase::Idle;
                out.push(TaskCommand::Completed {
                    task: "help_request".into(),
                });
                if let Some(prior) = self.state.suspended.take() {
                    self.start(prior, &mut out);
                }
            }
        }
        out
    }

    fn dispatch(&mut self, out: &mut Vec<TaskCommand>) {
        let trigger = self
            .state
            .active
            .as_ref()
            .map(|a| a.source)
            .unwrap_or(RequestSource::Vocal);
        out.push(TaskCommand::HelpDispatched { trigger });
        out.push(TaskCommand::Completed {
            task: "help_request".into(),
        });
        self.state.active = None;
        self.state.suspended = None;
        self.state.phase = TaskPhase::Idle;
    }

    /// Clock tick; fires the confirmation timeout.
    pub fn tick(&mut self, now: f64) -> Vec<TaskCommand> {
        let mut out = Vec::new();
        if let TaskPhase::AwaitHelpConfirm { deadline } = self.state.phase {
            if now >= deadline - 1e-9 {
                self.dispatch(&mut out);
            }
        }
        out
    }

    /// Navigation reports arrival at the current goal.
    pub fn goal_reached(&mut self, _now: f64) -> Vec<TaskCommand> {
        let mut out = Vec::new();
        let Some(active) = &self.state.active else {
            return out;
        };
        let kind = active.kind.clone();
        match kind {
            ActionKind::NavigateTo { .. } | ActionKind::GoAway | ActionKind::NightAssist { .. } => {
                self.state.active = None;
                self.state.phase = TaskPhase::Idle;
                if matches!(kind, ActionKind::NightAssist { .. }) {
                    out.push(TaskCommand::Lights { on: false });
                }
                out.push(TaskCommand::Completed {
                    task: kind.name().into(),
                });
            }
            _ => {}
        }
        out
    }

    /// Ends the active task with a spoken reason (lost person, no path).
    pub fn fail_active(&mut self, reason: &str) -> Vec<TaskCommand> {
        let mut out = Vec::new();
        if self.state.active.is_none() || matches!(self.state.phase, TaskPhase::AwaitHelpConfirm { .. }) {
            return out;
        }
        self.teardown(&mut out);
        out.push(TaskCommand::Say { text: reason.into() });
        out
    }
}
