use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::perception::skeleton::PoseClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallParams {
    pub window: f64,
    /// Laying share required to raise the alarm.
    pub alarm_ratio: f64,
    /// Laying share below which the episode ends and the monitor re-arms.
    pub rearm_ratio: f64,
}

impl Default for FallParams {
    fn default() -> Self {
        Self {
            window: 10.0,
            alarm_ratio: 0.8,
            rearm_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallAlarm {
    pub stamp: f64,
    /// When the laying episode began.
    pub since: f64,
}

/// Persisting-laying detector.
///
/// A laying episode opens on the first Laying sample. The window counts as
/// fully populated once the episode spans `window` seconds; the alarm then
/// fires if at least `alarm_ratio` of the episode's samples inside the window
/// are Laying. The episode closes (and the monitor re-arms) when Laying is no
/// longer the majority of its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallMonitor {
    pub params: FallParams,
    samples: VecDeque<(f64, bool)>,
    episode: Option<f64>,
    alarmed: bool,
}

impl FallMonitor {
    pub fn new(params: FallParams) -> Self {
        Self {
            params,
            samples: VecDeque::new(),
            episode: None,
            alarmed: false,
        }
    }

    pub fn in_episode(&self) -> bool {
        self.episode.is_some()
    }

    pub fn alarmed(&self) -> bool {
        self.alarmed
    }

    pub fn update(&mut self, class: PoseClass, stamp: f64) -> Option<FallAlarm> {
        const EPS: f64 = 1e-6;
        let laying = class == PoseClass::Laying;
        self.samples.push_back((stamp, laying));
        while self
            .samples
            .front()
            .is_some_and(|s| s.0 < stamp - self.params.window - EPS)
        {
            self.samples.pop_front();
        }
        if laying && self.episode.is_none() {
            self.episode = Some(stamp);
        }
        let start = self.episode?;
        let (n, hits) = self
            .samples
            .iter()
            .filter(|s| s.0 >= start)
            .fold((0usize, 0usize), |(n, h), s| (n + 1, h + usize::from(s.1)));
        let share = hits as f64 / n as f64;
        if share < self.params.rearm_ratio {
            self.episode = None;
            self.alarmed = false;
            return None;
        }
        if !self.alarmed && stamp - start >= self.params.window - EPS && share >= self.params.alarm_ratio {
            self.alarmed = true;
            return Some(FallAlarm { stamp, since: start });
        }
        None
    }
}

impl Default for FallMonitor {
    fn default() -> Self {
        Self::new(FallParams::default())
    }
}
