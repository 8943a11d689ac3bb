//! In-process publish/subscribe bus.
//!
//! Topics are registered with a payload kind; publishing a payload of another
//! kind is a schema error. Every subscriber owns a bounded queue (drop-oldest)
//! and sees each publisher's messages in sequence order.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Mutex, Weak};

use crate::error::{Error, Result};
use crate::kinematics::{Pose2D, Twist2D};

/// Default per-subscriber queue depth.
pub const DEFAULT_QUEUE_DEPTH: usize = 64;

pub trait Payload: Clone + Send + 'static {
    /// Schema identifier of this payload value.
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<P> {
    pub topic: String,
    pub publisher: String,
    pub seq: u64,
    pub stamp: f64,
    pub payload: P,
}

#[derive(Debug)]
struct Queue<P> {
    topic: Option<String>,
    depth: usize,
    items: Mutex<(VecDeque<Envelope<P>>, u64)>,
}

impl<P> Queue<P> {
    fn push(&self, env: Envelope<P>) {
        let mut guard = self.items.lock().unwrap();
        if guard.0.len() >= self.depth {
            guard.0.pop_front();
            guard.1 += 1;
        }
        guard.0.push_back(env);
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
#[derive(Debug)]
pub struct Subscription<P> {
    queue: Arc<Queue<P>>,
}

impl<P> Subscription<P> {
    pub fn try_recv(&self) -> Option<Envelope<P>> {
        self.queue.items.lock().unwrap().0.pop_front()
    }

    pub fn drain(&self) -> Vec<Envelope<P>> {
        self.queue.items.lock().unwrap().0.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.items.lock().unwrap().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Messages discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        self.queue.items.lock().unwrap().1
    }

    pub fn topic(&self) -> Option<&str> {
        self.queue.topic.as_deref()
    }
}

struct Inner<P> {
    registry: BTreeMap<String, &'static str>,
    subscribers: Vec<Weak<Queue<P>>>,
    seqs: HashMap<(String, String), u64>,
    clock: f64,
}

/// Cloneable handle to a shared bus.
pub struct Bus<P> {
    inner: Arc<Mutex<Inner<P>>>,
}

impl<P> Clone for Bus<P> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<P: Payload> Default for Bus<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Payload> Bus<P> {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                registry: BTreeMap::new(),
                subscribers: Vec::new(),
                seqs: HashMap::new(),
                clock: 0.0,
            })),
        }
    }

    pub fn register(&self, topic: &str, kind: &'static str) {
        self.inner.lock().unwrap().registry.insert(topic.to_string(), kind);
    }

    pub fn topics(&self) -> Vec<(String, &'static str)> {
        let inner = self.inner.lock().unwrap();
        inner.registry.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn kind_of(&self, topic: &str) -> Option<&'static str> {
        self.inner.lock().unwrap().registry.get(topic).copied()
    }

    /// Sets the simulation time used to stamp published messages.
    pub fn set_clock(&self, t: f64) {
        self.inner.lock().unwrap().clock = t;
    }

    pub fn clock(&self) -> f64 {
        self.inner.lock().unwrap().clock
    }

    pub fn subscribe(&self, topic: &str) -> Result<Subscription<P>> {
        self.subscribe_with_depth(topic, DEFAULT_QUEUE_DEPTH)
    }

    pub fn subscribe_with_depth(&self, topic: &str, depth: usize) -> Result<Subscription<P>> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.registry.contains_key(topic) {
            return Err(Error::UnknownTopic(topic.to_string()));
        }
        Ok(Self::attach(&mut inner, Some(topic.to_string()), depth))
    }

    /// Subscribes to every topic (recorders, bridges).
    pub fn subscribe_all(&self, depth: usize) -> Subscription<P> {
        let mut inner = self.inner.lock().unwrap();
        Self::attach(&mut inner, None, depth)
    }

    fn attach(inner: &mut Inner<P>, topic: Option<String>, depth: usize) -> Subscription<P> {
        let queue = Arc::new(Queue {
            topic,
            depth: depth.max(1),
            items: Mutex::new((VecDeque::new(), 0)),
        });
        inner.subscribers.push(Arc::downgrade(&queue));
        Subscription { queue }
    }

    pub fn publisher(&self, name: &str) -> Publisher<P> {
        Publisher {
            bus: self.clone(),
            name: name.to_string(),
        }
    }

    fn publish_from(&self, publisher: &str, topic: &str, payload: P, stamp: Option<f64>) -> Result<u64> {
        let mut inner = self.inner.lock().unwrap();
        let expected = *inner
            .registry
            .get(topic)
            .ok_or_else(|| Error::UnknownTopic(topic.to_string()))?;
        if payload.kind() != expected {
            return Err(Error::Schema {
                topic: topic.to_string(),
                expected: expected.to_string(),
                got: payload.kind().to_string(),
            });
        }
        let seq = {
            let s = inner
                .seqs
                .entry((publisher.to_string(), topic.to_string()))
                .or_insert(0);
            *s += 1;
            *s
        };
        let env = Envelope {
            topic: topic.to_string(),
            publisher: publisher.to_string(),
            seq,
            stamp: stamp.unwrap_or(inner.clock),
            payload,
        };
        inner.subscribers.retain(|w| w.strong_count() > 0);
        for q in inner.subscribers.iter().filter_map(Weak::upgrade) {
            if q.topic.as_deref().is_none_or(|t| t == topic) {
                q.push(env.clone());
            }
        }
        Ok(seq)
    }
}

/// A named publishing endpoint; sequence numbers are per (publisher, topic).
pub struct Publisher<P> {
    bus: Bus<P>,
    name: String,
}

impl<P: Payload> Publisher<P> {
    pub fn publish(&self, topic: &str, payload: P) -> Result<u64> {
        self.bus.publish_from(&self.name, topic, payload, None)
    }

    /// Publishes with an explicit stamp (replay).
    pub fn publish_at(&self, topic: &str, payload: P, stamp: f64) -> Result<u64> {
        self.bus.publish_from(&self.name, topic, payload, Some(stamp))
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestSource {
    Vocal,
    Manual,
    Monitor,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ActionKind {
    NavigateTo { poi: String },
    Follow,
    GoAway,
    NightAssist { poi: String },
    HelpRequest,
    Stop,
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::NavigateTo { .. } => "navigate_to",
            ActionKind::Follow => "follow",
            ActionKind::GoAway => "go_away",
            ActionKind::NightAssist { .. } => "night_assist",
            ActionKind::HelpRequest => "help_request",
            ActionKind::Stop => "stop",
        }
    }

    pub fn poi(&self) -> Option<&str> {
        match self {
            ActionKind::NavigateTo { poi } | ActionKind::NightAssist { poi } => Some(poi),
            _ => None,
        }
    }
}

/// Task activation request carried on the Actions topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub kind: ActionKind,
    pub source: RequestSource,
}

impl ActionRequest {
    pub fn new(kind: ActionKind, source: RequestSource) -> Result<Self> {
        if kind.poi().is_some_and(|p| p.trim().is_empty()) {
            return Err(Error::invalid("point of interest name must not be empty"));
        }
        Ok(Self { kind, source })
    }
}

/// User answer to a help confirmation prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HelpReply {
    Confirm,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VelocitySource {
    Manual,
    Autonomous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub twist: Twist2D,
    pub source: VelocitySource,
    pub stamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArbiterConfig {
    /// Manual commands older than this (s) no longer override autonomy.
    pub manual_timeout: f64,
    /// Autonomous commands older than this (s) are treated as absent.
    pub autonomous_timeout: f64,
}

impl Default for ArbiterConfig {
    fn default() -> Self {
        Self {
            manual_timeout: 0.5,
            autonomous_timeout: 0.5,
        }
    }
}

/// Serial-node velocity arbitration: e-stop, then fresh manual, then fresh autonomous.
pub fn arbitrate_velocity(
    manual: Option<&VelocityCommand>,
    autonomous: Option<&VelocityCommand>,
    estop_latched: bool,
    now: f64,
    config: &ArbiterConfig,
) -> Twist2D {
    if estop_latched {
        return Twist2D::ZERO;
    }
    if let Some(m) = manual.filter(|m| now - m.stamp <= config.manual_timeout) {
        return m.twist;
    }
    if let Some(a) = autonomous.filter(|a| now - a.stamp <= config.autonomous_timeout) {
        return a.twist;
    }
    Twist2D::ZERO
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EStop {
    latched: bool,
}

impl EStop {
    /// Latches; returns true when the state changed.
    pub fn set(&mut self) -> bool {
        !std::mem::replace(&mut self.latched, true)
    }

    pub fn reset(&mut self) -> bool {
        std::mem::replace(&mut self.latched, false)
    }

    pub fn is_latched(&self) -> bool {
        self.latched
    }
}

/// Navigation goal published by the task manager.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavGoal {
    pub pose: Pose2D,
    /// Linear speed cap (m/s) while pursuing this goal.
    pub speed_cap: f64,
}
