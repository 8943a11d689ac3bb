//! Executable scenarios: a `MARVINSCN v1` header line followed by a TOML body.
//!
//! ```text
//! MARVINSCN v1
//! name = "fall"
//! horizon = 20.0            # seconds of simulated time
//! world = "two_room.world"  # relative to the scenario file (or `world_inline`)
//! mapping = false
//!
//! [robot]
//! start = [1.5, 2.0, 0.0]
//!
//! [poi.dock]
//! x = 1.0
//! y = 1.0
//!
//! [[person]]
//! name = "ada"
//! start = [4.0, 0.8, 1.57]
//! speed = 0.5
//! route = [[4.0, 2.0]]
//! loop = false
//! script = [{ at = 5.0, do = "posture", posture = "laying" }]
//!
//! [[utterance]]             # spoken as tokens, one every `spacing` seconds
//! at = 1.0
//! text = "marvin follow me"
//!
//! [[command]]               # any command-topic wire payload
//! at = 2.0
//! topic = "actions"
//! payload = { kind = { task = "stop" }, source = "Manual" }
//!
//! [[assert]]
//! kind = "event"            # event | absent | order | distance_band | heading | near_poi
//! topic = "task"
//! match = { cmd = "help_dispatched" }
//! within = [14.0, 16.0]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use marvin_core::config::MarvinConfig;
use marvin_core::grid::OccupancyGrid;
use marvin_core::kinematics::{wrap_angle, Pose2D};
use marvin_core::messages::{is_command_topic, Message};
use marvin_core::stack::{Stack, StackSetup};
use marvin_core::taskmgr::PoiRegistry;
use marvin_core::vocal::{silence_frames, speech_frames, IntentCatalogue, UtteranceFrame};
use marvin_core::worldsim::{parse_world, PersonAgent, ScriptEvent};
use serde::Deserialize;
use serde_json::Value;

use crate::error::GatewayError;
use crate::record::{LogHeader, Recorder};
use crate::wire::{decode, topic_kind, WireMessage};

pub const SCENARIO_MAGIC: &str = "MARVINSCN v1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSpec {
    start: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoiSpec {
    x: f64,
    y: f64,
    #[serde(default)]
    yaw: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonSpec {
    name: String,
    start: [f64; 3],
    #[serde(default)]
    speed: f64,
    #[serde(default)]
    route: Vec<[f64; 2]>,
    #[serde(default, rename = "loop")]
    looped: bool,
    #[serde(default)]
    script: Vec<ScriptEvent>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceSpec {
    at: f64,
    text: String,
    #[serde(default = "default_spacing")]
    spacing: f64,
    #[serde(default = "default_energy")]
    energy: f64,
}

fn default_spacing() -> f64 {
    0.3
}

fn default_energy() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandSpec {
    at: f64,
    topic: String,
    payload: Value,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventPattern {
    pub topic: String,
    #[serde(default, rename = "match")]
    pub pattern: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// A matching message occurs, optionally inside `within = [t0, t1]`.
    Event {
        topic: String,
        #[serde(default, rename = "match")]
        pattern: Option<Value>,
        #[serde(default)]
        within: Option<[f64; 2]>,
    },
    /// No matching message occurs.
    Absent {
        topic: String,
        #[serde(default, rename = "match")]
        pattern: Option<Value>,
    },
    /// Exactly `count` matching messages occur.
    Count {
        topic: String,
        #[serde(default, rename = "match")]
        pattern: Option<Value>,
        count: usize,
    },
    /// The first match of `first` precedes the first match of `then`.
    Order { first: EventPattern, then: EventPattern },
    /// Robot-to-person distance stays inside `band` for `min_fraction` of ticks after `after`.
    DistanceBand {
        person: String,
        band: [f64; 2],
        #[serde(default)]
        after: f64,
        min_fraction: f64,
    },
    /// Heading error toward the person stays below `max_error` for `min_fraction` of ticks.
    Heading {
        person: String,
        max_error: f64,
        #[serde(default)]
        after: f64,
        min_fraction: f64,
    },
    /// The robot ends within `tolerance` of a point of interest.
    NearPoi { poi: String, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct AssertSpec {
    #[serde(default)]
    label: Option<String>,
    #[serde(flatten)]
    check: Check,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    horizon: f64,
    #[serde(default)]
    world: Option<String>,
    #[serde(default)]
    world_inline: Option<String>,
    #[serde(default)]
    mapping: bool,
    robot: RobotSpec,
    poi: BTreeMap<String, PoiSpec>,
    #[serde(default)]
    person: Vec<PersonSpec>,
    #[serde(default)]
    utterance: Vec<UtteranceSpec>,
    #[serde(default)]
    command: Vec<CommandSpec>,
    #[serde(default, rename = "assert")]
    asserts: Vec<AssertSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub label: String,
    pub check: Check,
}

/// A message the runner injects at a given simulation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub at: f64,
    pub topic: String,
    pub message: Message,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub horizon: f64,
    pub grid: OccupancyGrid,
    pub start: Pose2D,
    pub pois: PoiRegistry,
    pub persons: Vec<PersonAgent>,
    pub mapping: bool,
    /// Sorted by time; ties keep file order.
    pub injections: Vec<Injection>,
    pub assertions: Vec<Assertion>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_err(line: usize, msg: impl Into<String>) -> GatewayError {
    GatewayError::Parse { line, msg: msg.into() }
}

fn describe(check: &Check) -> String {
    match check {
        Check::Event { topic, pattern, within } => {
            let mut s = format!("event on `{topic}`");
            if let Some(p) = pattern {
                s += &format!(" matching {p}");
            }
            if let Some([a, b]) = within {
                s += &format!(" within [{a}, {b}] s");
            }
            s
        }
        Check::Absent { topic, pattern } => match pattern {
            Some(p) => format!("no `{topic}` event matching {p}"),
            None => format!("no `{topic}` event"),
        },
        Check::Count { topic, pattern, count } => match pattern {
            Some(p) => format!("{count} `{topic}` events matching {p}"),
            None => format!("{count} `{topic}` events"),
        },
        Check::Order { first, then } => format!("`{}` before `{}`", first.topic, then.topic),
        Check::DistanceBand {
            person,
            band,
            min_fraction,
            ..
        } => format!(
            "distance to {person} in [{}, {}] m for {:.0}% of ticks",
            band[0],
            band[1],
            min_fraction * 100.0
        ),
        Check::Heading {
            person,
            max_error,
            min_fraction,
            ..
        } => format!(
            "heading error to {person} < {max_error} rad for {:.0}% of ticks",
            min_fraction * 100.0
        ),
        Check::NearPoi { poi, tolerance } => format!("robot ends within {tolerance} m of {poi}"),
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Parses scenario text; `world` paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, GatewayError> {
        let (first, body_offset) = match text.find('\n') {
            Some(i) => (&text[..i], i + 1),
            None => (text, text.len()),
        };
        if first.trim() != SCENARIO_MAGIC {
            return Err(parse_err(1, format!("expected `{SCENARIO_MAGIC}`")));
        }
        let body = &text[body_offset..];
        let f: ScenarioFile = toml::from_str(body).map_err(|e| {
            let line = e.span().map(|s| line_of(body, s.start) + 1).unwrap_or(1);
            parse_err(line, e.message().to_string())
        })?;
        if !(f.horizon > 0.0 && f.horizon.is_finite()) {
            return Err(parse_err(1, "horizon must be positive"));
        }
        let world_text = match (&f.world, &f.world_inline) {
            (Some(p), None) => {
                let wp: PathBuf = base.join(p);
                std::fs::read_to_string(&wp).map_err(|e| parse_err(1, format!("world `{}`: {e}", wp.display())))?
            }
            (None, Some(inline)) => inline.clone(),
            _ => return Err(parse_err(1, "exactly one of `world` and `world_inline` is required")),
        };
        let grid = parse_world(&world_text).map_err(|e| parse_err(1, format!("world: {e}")))?;
        let pois = PoiRegistry::new(f.poi.iter().map(|(n, p)| (n.as_str(), Pose2D::new(p.x, p.y, p.yaw))))
            .map_err(|e| parse_err(1, e.to_string()))?;
        let [sx, sy, syaw] = f.robot.start;
        let mut persons = Vec::new();
        for p in &f.person {
            let [x, y, yaw] = p.start;
            let agent = PersonAgent::new(&p.name, Pose2D::new(x, y, yaw), p.speed)
                .map_err(|e| parse_err(1, format!("person {}: {e}", p.name)))?
                .with_route(p.route.iter().map(|w| (w[0], w[1])).collect(), p.looped)
                .with_script(p.script.clone());
            persons.push(agent);
        }
        let mut injections = Vec::new();
        for u in &f.utterance {
            for frame in utterance_frames(u.at, &u.text, u.spacing, u.energy)
                .map_err(|e| parse_err(1, format!("utterance `{}`: {e}", u.text)))?
            {
                injections.push(Injection {
                    at: frame.stamp,
                    topic: marvin_core::messages::topics::UTTERANCE.into(),
                    message: Message::UtteranceFrame(frame),
                });
            }
        }
        for c in &f.command {
            if !is_command_topic(&c.topic) {
                return Err(parse_err(1, format!("`{}` is not a command topic", c.topic)));
            }
            let kind = topic_kind(&c.topic).expect("command topics are registered");
            let message = decode(&WireMessage {
                topic: c.topic.clone(),
                kind: kind.into(),
                stamp: c.at,
                payload: c.payload.clone(),
            })
            .map_err(|e| parse_err(1, format!("command at {}: {e}", c.at)))?;
            injections.push(Injection {
                at: c.at,
                topic: c.topic.clone(),
                message,
            });
        }
        injections.sort_by(|a, b| a.at.total_cmp(&b.at));
        let assertions = f
            .asserts
            .into_iter()
            .map(|a| Assertion {
                label: a.label.unwrap_or_else(|| describe(&a.check)),
                check: a.check,
            })
            .collect::<Vec<_>>();
        for a in &assertions {
            let person = match &a.check {
                Check::DistanceBand { person, .. } | Check::Heading { person, .. } => Some(person),
                _ => None,
            };
            if let Some(name) = person {
                if !persons.iter().any(|p| &p.name == name) {
                    return Err(parse_err(1, format!("assertion names unknown person `{name}`")));
                }
            }
            if let Check::NearPoi { poi, .. } = &a.check {
                if pois.get(poi).is_none() {
                    return Err(parse_err(1, format!("assertion names unknown poi `{poi}`")));
                }
            }
        }
        Ok(Self {
            name: f.name,
            horizon: f.horizon,
            grid,
            start: Pose2D::new(sx, sy, syaw),
            pois,
            persons,
            mapping: f.mapping,
            injections,
            assertions,
        })
    }
}

/// Token frames for `text` followed by enough silence to close the capture.
pub fn utterance_frames(at: f64, text: &str, spacing: f64, energy: f64) -> marvin_core::Result<Vec<UtteranceFrame>> {
    if !(spacing > 0.0) {
        return Err(marvin_core::Error::InvalidArgument("spacing must be positive".into()));
    }
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    let mut frames = speech_frames(at, spacing, &tokens, energy);
    for f in &frames {
        UtteranceFrame::new(f.stamp, f.energy, f.token.as_deref())?;
    }
    let end = at + tokens.len() as f64 * spacing;
    frames.extend(silence_frames(end, 0.1, 15));
    Ok(frames)
}

/// Subset match: every key in `pattern` must match in `value`.
pub fn matches(pattern: &Value, value: &Value) -> bool {
    match (pattern, value) {
        (Value::Object(p), Value::Object(v)) => p.iter().all(|(k, pv)| v.get(k).is_some_and(|vv| matches(pv, vv))),
        (Value::Number(a), Value::Number(b)) => a.as_f64() == b.as_f64(),
        _ => pattern == value,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssertionOutcome {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    pub seed: u64,
    pub outcomes: Vec<AssertionOutcome>,
    /// The full JSON-lines event log.
    pub log: Vec<u8>,
    pub sim_time: f64,
    pub wall_time: Duration,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    /// 0 when every assertion passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    ticks: u64,
    good: u64,
}

/// Steps a scenario tick by tick while recording its log.
pub struct ScenarioRunner {
    pub scenario: Scenario,
    pub stack: Stack,
    seed: u64,
    recorder: Recorder<Vec<u8>>,
    events: Vec<WireMessage>,
    next_injection: usize,
    tallies: Vec<Tally>,
    started: Instant,
}

impl ScenarioRunner {
    pub fn new(scenario: Scenario, seed: u64, config: MarvinConfig) -> Result<Self, GatewayError> {
        let setup = StackSetup {
            grid: scenario.grid.clone(),
            start: scenario.start,
            persons: scenario.persons.clone(),
            pois: scenario.pois.clone(),
            catalogue: IntentCatalogue::bundled(),
            seed,
            mapping: scenario.mapping,
        };
        let stack = Stack::new(config, setup)?;
        let recorder = Recorder::new(
            &stack.bus,
            Vec::new(),
            &LogHeader::new(Some(&scenario.name), Some(seed)),
        )?;
        let tallies = vec![Tally::default(); scenario.assertions.len()];
        Ok(Self {
            scenario,
            stack,
            seed,
            recorder,
            events: Vec::new(),
            next_injection: 0,
            tallies,
            started: Instant::now(),
        })
    }

    pub fn done(&self) -> bool {
        self.stack.now() >= self.scenario.horizon - 1e-9
    }

    /// Messages recorded so far.
    pub fn events(&self) -> &[WireMessage] {
        &self.events
    }

    /// Injects due scripted messages, runs one tick and records its output.
    pub fn step(&mut self) -> Result<(), GatewayError> {
        let now = self.stack.now();
        self.stack.bus.set_clock(now);
        let injector = self.stack.bus.publisher("scenario");
        while let Some(inj) = self.scenario.injections.get(self.next_injection) {
            if inj.at > now + 1e-9 {
                break;
            }
            injector.publish(&inj.topic, inj.message.clone())?;
            self.next_injection += 1;
        }
        self.stack.step()?;
        self.sample();
        let fresh = self.recorder.pump()?;
        self.events.extend(fresh);
        Ok(())
    }

    fn sample(&mut self) {
        let t = self.stack.now();
        let robot = self.stack.world.robot.pose;
        for (a, tally) in self.scenario.assertions.iter().zip(self.tallies.iter_mut()) {
            let (person, after) = match &a.check {
                Check::DistanceBand { person, after, .. } | Check::Heading { person, after, .. } => (person, *after),
                _ => continue,
            };
            if t < after - 1e-9 {
                continue;
            }
            let Some(p) = self.stack.world.persons.iter().find(|p| &p.name == person) else {
                continue;
            };
            let (dx, dy) = (p.pose.x - robot.x, p.pose.y - robot.y);
            let ok = match &a.check {
                Check::DistanceBand { band, .. } => (band[0]..=band[1]).contains(&dx.hypot(dy)),
                Check::Heading { max_error, .. } => wrap_angle(dy.atan2(dx) - robot.yaw).abs() < *max_error,
                _ => unreachable!(),
            };
            tally.ticks += 1;
            tally.good += u64::from(ok);
        }
    }

    pub fn run_to_end(&mut self) -> Result<(), GatewayError> {
        while !self.done() {
            self.step()?;
        }
        Ok(())
    }

    fn first_match(&self, topic: &str, pattern: &Option<Value>) -> Option<(usize, f64)> {
        self.events
            .iter()
            .enumerate()
            .find(|(_, w)| w.topic == topic && pattern.as_ref().is_none_or(|p| matches(p, &w.payload)))
            .map(|(i, w)| (i, w.stamp))
    }

    fn evaluate(&self, a: &Assertion, tally: Tally) -> AssertionOutcome {
        let (passed, detail) = match &a.check {
            Check::Event { topic, pattern, within } => match self.first_match(topic, pattern) {
                None => (false, "never observed".to_string()),
                Some((_, t)) => {
                    let ok = within.is_none_or(|[lo, hi]| t >= lo - 1e-9 && t <= hi + 1e-9);
                    (ok, format!("first at {t:.2} s"))
                }
            },
            Check::Absent { topic, pattern } => match self.first_match(topic, pattern) {
                None => (true, "none observed".to_string()),
                Some((_, t)) => (false, format!("observed at {t:.2} s")),
            },
            Check::Count { topic, pattern, count } => {
                let n = self
                    .events
                    .iter()
                    .filter(|w| &w.topic == topic && pattern.as_ref().is_none_or(|p| matches(p, &w.payload)))
                    .count();
                (n == *count, format!("{n} observed"))
            }
            Check::Order { first, then } => {
                match (
                    self.first_match(&first.topic, &first.pattern),
                    self.first_match(&then.topic, &then.pattern),
                ) {
                    (Some((i, ta)), Some((j, tb))) => (i < j, format!("{ta:.2} s then {tb:.2} s")),
                    (a, b) => (false, format!("missing: first={} then={}", a.is_some(), b.is_some())),
                }
            }
            Check::DistanceBand { min_fraction, .. } | Check::Heading { min_fraction, .. } => {
                let frac = if tally.ticks == 0 {
                    0.0
                } else {
                    tally.good as f64 / tally.ticks as f64
                };
                (
                    tally.ticks > 0 && frac >= *min_fraction,
                    format!("{:.1}% of {} ticks", frac * 100.0, tally.ticks),
                )
            }
            Check::NearPoi { poi, tolerance } => {
                let target = self.scenario.pois.get(poi).expect("validated at parse time");
                let d = target.distance_to(&self.stack.world.robot.pose);
                (d <= *tolerance, format!("final distance {d:.3} m"))
            }
        };
        AssertionOutcome {
            label: a.label.clone(),
            passed,
            detail,
        }
    }

    /// Evaluates every assertion against the recorded run.
    pub fn finish(self) -> Result<ScenarioResult, GatewayError> {
        let outcomes = self
            .scenario
            .assertions
            .iter()
            .zip(&self.tallies)
            .map(|(a, t)| self.evaluate(a, *t))
            .collect();
        let sim_time = self.stack.now();
        let wall_time = self.started.elapsed();
        Ok(ScenarioResult {
            name: self.scenario.name.clone(),
            seed: self.seed,
            outcomes,
            log: self.recorder.finish()?,
            sim_time,
            wall_time,
        })
    }
}

/// Loads, runs to the horizon and evaluates a scenario file.
pub fn run_scenario(path: impl AsRef<Path>, seed: u64, config: MarvinConfig) -> Result<ScenarioResult, GatewayError> {
    let scenario = Scenario::load(path)?;
    let mut runner = ScenarioRunner::new(scenario, seed, config)?;
    runner.run_to_end()?;
    runner.finish()
}
