//! Voice command cascade over token/energy frames: trigger word gate,
//! energy endpointing, intent retrieval and text responses.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bus::{ActionKind, HelpReply};
use crate::error::{Error, Result};

/// The bundled catalogue.
pub const DEFAULT_CATALOGUE: &str = include_str!("../data/intents.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceFrame {
    pub stamp: f64,
    /// RMS level in [0, 1].
    pub energy: f64,
    #[serde(default)]
    pub token: Option<String>,
}

impl UtteranceFrame {
    pub fn new(stamp: f64, energy: f64, token: Option<&str>) -> Result<Self> {
        if !(0.0..=1.0).contains(&energy) {
            return Err(Error::invalid(format!("energy {energy} outside [0, 1]")));
        }
        Ok(Self {
            stamp,
            energy,
            token: token.map(str::to_string),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CatalogueFile {
    trigger: String,
    #[serde(default)]
    names: Vec<String>,
    keywords: Vec<String>,
    noise_class: String,
    intents: BTreeMap<String, Vec<String>>,
}

/// Task phrases plus the spotter vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentCatalogue {
    pub trigger: String,
    pub names: Vec<String>,
    pub keywords: Vec<String>,
    pub noise_class: String,
    pub intents: BTreeMap<String, Vec<String>>,
    index: TfIdf,
}

impl IntentCatalogue {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: CatalogueFile = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("catalogue: {e}")))?;
        Self::new(f.trigger, f.names, f.keywords, f.noise_class, f.intents)
    }

    pub fn new(
        trigger: String,
        names: Vec<String>,
        keywords: Vec<String>,
        noise_class: String,
        intents: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        if intents.is_empty() {
            return Err(Error::invalid("catalogue has no intents"));
        }
        if let Some((task, _)) = intents.iter().find(|(_, p)| p.is_empty()) {
            return Err(Error::invalid(format!("task '{task}' has no phrases")));
        }
        let mut phrases = Vec::new();
        for (task, list) in &intents {
            for p in list {
                phrases.push((task.clone(), normalize(p)));
            }
        }
        let mut cat = Self {
            trigger: String::new(),
            names: names.iter().map(|n| n.to_lowercase()).collect(),
            keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
            noise_class,
            intents,
            index: TfIdf::build(phrases),
        };
        cat.set_trigger(&trigger)?;
        Ok(cat)
    }

    pub fn bundled() -> Self {
        Self::from_toml(DEFAULT_CATALOGUE).expect("bundled catalogue is valid")
    }

    /// Changes the trigger word; it must be a keyword or a configured name.
    pub fn set_trigger(&mut self, word: &str) -> Result<()> {
        let w = word.trim().to_lowercase();
        if !self.keywords.contains(&w) && !self.names.contains(&w) {
            return Err(Error::invalid(format!(
                "'{word}' is neither a keyword nor a configured name"
            )));
        }
        self.trigger = w;
        Ok(())
    }

    pub fn phrase_count(&self) -> usize {
        self.index.docs.len()
    }
}

/// Lowercase, alphanumerics only, single spaces.
pub fn normalize(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

type Sparse = BTreeMap<String, f64>;

fn char_ngrams(text: &str) -> BTreeMap<String, f64> {
    let padded: Vec<char> = format!(" {text} ").chars().collect();
    let mut out = BTreeMap::new();
    for n in 3..=5 {
        for w in padded.windows(n) {
            *out.entry(w.iter().collect()).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Maps normalised text to a sparse vector; the matcher compares with cosine.
pub trait Embedding {
    fn embed(&self, text: &str) -> Sparse;
}

/// Character 3-5-gram counts weighted by smoothed inverse document frequency
/// over the catalogue phrases, L2-normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf {
    docs: Vec<(String, Sparse)>,
    df: BTreeMap<String, usize>,
    n: usize,
}

impl TfIdf {
    fn build(phrases: Vec<(String, String)>) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for (_, p) in &phrases {
            for g in char_ngrams(p).into_keys() {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let mut me = Self {
            docs: Vec::new(),
            df,
            n: phrases.len(),
        };
        let docs = phrases.into_iter().map(|(t, p)| (t, me.embed(&p))).collect();
        me.docs = docs;
        me
    }

    fn idf(&self, gram: &str) -> f64 {
        let n = self.n as f64;
        let df = self.df.get(gram).copied().unwrap_or(0) as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

impl Embedding for TfIdf {
    fn embed(&self, text: &str) -> Sparse {
        let mut v: Sparse = char_ngrams(text)
            .into_iter()
            .map(|(g, c)| {
                let w = c * self.idf(&g);
                (g, w)
            })
            .collect();
        let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn cosine(a: &Sparse, b: &Sparse) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter_map(|(g, x)| large.get(g).map(|y| x * y)).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Action(ActionKind),
    Reply(HelpReply),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MatchOutcome {
    Matched { intent: Intent, task: String, score: f64 },
    NotUnderstood { score: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocalParams {
    pub silence_threshold: f64,
    /// Silence needed to close a capture (s).
    pub hold: f64,
    pub max_utterance: f64,
    pub match_threshold: f64,
}

impl Default for VocalParams {
    fn default() -> Self {
        Self {
            silence_threshold: 0.1,
            hold: 0.8,
            max_utterance: 10.0,
            match_threshold: 0.35,
        }
    }
}

/// Longest registry name occurring as a whole-word substring of `text`.
pub fn extract_poi<'a>(text: &str, pois: &[&'a str]) -> Option<&'a str> {
    let hay = format!(" {} ", normalize(text));
    pois.iter()
        .filter(|p| {
            let n = normalize(p);
            !n.is_empty() && hay.contains(&format!(" {n} "))
        })
        .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
        .copied()
}

/// Best-scoring task by cosine similarity, ties to the lexicographically
/// smaller task name. POI-bearing tasks need a registry name in the text.
pub fn match_intent(text: &str, catalogue: &IntentCatalogue, pois: &[&str], threshold: f64) -> MatchOutcome {
    match_with(text, catalogue, &catalogue.index, pois, threshold)
}

pub fn match_with<E: Embedding>(
    text: &str,
    catalogue: &IntentCatalogue,
    embedder: &E,
    pois: &[&str],
    threshold: f64,
) -> MatchOutcome {
    let norm = normalize(text);
    if norm.is_empty() {
        return MatchOutcome::NotUnderstood { score: 0.0 };
    }
    let q = embedder.embed(&norm);
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (task, phrase) in &catalogue.index.docs {
        let s = cosine(&q, phrase);
        let e = best.entry(task.as_str()).or_insert(f64::NEG_INFINITY);
        if s > *e {
            *e = s;
        }
    }
    // BTreeMap iterates in name order; strict > keeps the first on ties
    let (task, score) = best.into_iter().fold(
        ("", f64::NEG_INFINITY),
        |acc, (t, s)| if s > acc.1 { (t, s) } else { acc },
    );
    if score < threshold {
        return MatchOutcome::NotUnderstood { score };
    }
    let poi = || extract_poi(&norm, pois).map(str::to_string);
    let intent = match task {
        "navigate_to" => poi().map(|poi| Intent::Action(ActionKind::NavigateTo { poi })),
        "night_assist" => poi().map(|poi| Intent::Action(ActionKind::NightAssist { poi })),
        "follow" => Some(Intent::Action(ActionKind::Follow)),
        "go_away" => Some(Intent::Action(ActionKind::GoAway)),
        "help_request" => Some(Intent::Action(ActionKind::HelpRequest)),
        "stop" => Some(Intent::Action(ActionKind::Stop)),
        "confirm" => Some(Intent::Reply(HelpReply::Confirm)),
        "deny" => Some(Intent::Reply(HelpReply::Deny)),
        _ => None,
    };
    match intent {
        Some(intent) => MatchOutcome::Matched {
            intent,
            task: task.to_string(),
            score,
        },
        None => MatchOutcome::NotUnderstood { score },
    }
}

/// Spoken (text) reply for a match outcome.
pub fn respond(outcome: &MatchOutcome) -> String {
    match outcome {
        MatchOutcome::NotUnderstood { .. } => "Sorry, I did not understand.".into(),
        MatchOutcome::Matched { intent, .. } => match intent {
            Intent::Action(ActionKind::NavigateTo { poi }) => format!("Okay, going to the {poi}."),
            Intent::Action(ActionKind::NightAssist { poi }) => format!("Lights on. I will guide you to the {poi}."),
            Intent::Action(ActionKind::Follow) => "Okay, I will follow you.".into(),
            Intent::Action(ActionKind::GoAway) => "Okay, going back to my dock.".into(),
            Intent::Action(ActionKind::HelpRequest) => HELP_PROMPT.into(),
            Intent::Action(ActionKind::Stop) => "Stopping.".into(),
            Intent::Reply(HelpReply::Confirm) => "Calling for help.".into(),
            Intent::Reply(HelpReply::Deny) => "Okay, no call.".into(),
        },
    }
}

pub const HELP_PROMPT: &str = "Do you want me to call for help? Please answer yes or no.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VocalPhase {
    Idle,
    Capturing,
    Matching,
    Responding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub phase: VocalPhase,
    pub buffer: Vec<String>,
    /// Seconds of continuous sub-threshold energy.
    pub silence_run: f64,
    silence_since: Option<f64>,
    capture_start: f64,
}

impl Default for PipelineState {
    fn default() -> Self {
        Self {
            phase: VocalPhase::Idle,
            buffer: Vec::new(),
            silence_run: 0.0,
            silence_since: None,
            capture_start: 0.0,
        }
    }
}

/// Trigger gate: flips Idle to Capturing on the trigger word.
pub fn keyword_step(state: &mut PipelineState, frame: &UtteranceFrame, trigger: &str) -> bool {
    if state.phase != VocalPhase::Idle {
        return false;
    }
    let hit = frame
        .token
        .as_deref()
        .is_some_and(|t| t.trim().eq_ignore_ascii_case(trigger));
    if hit {
        state.phase = VocalPhase::Capturing;
        state.buffer.clear();
        state.silence_run = 0.0;
        state.silence_since = None;
        state.capture_start = frame.stamp;
    }
    hit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Captured {
    pub text: String,
    pub truncated: bool,
}

/// Energy endpointing while capturing; returns the utterance once closed.
pub fn endpoint(state: &mut PipelineState, frame: &UtteranceFrame, params: &VocalParams) -> Option<Captured> {
    if state.phase != VocalPhase::Capturing {
        return None;
    }
    if frame.energy >= params.silence_threshold {
        state.silence_since = None;
        state.silence_run = 0.0;
        if let Some(t) = frame.token.as_deref() {
            let t = t.trim();
            if !t.is_empty() {
                state.buffer.push(t.to_lowercase());
            }
        }
    } else {
        let since = *state.silence_since.get_or_insert(frame.stamp);
        state.silence_run = frame.stamp - since;
    }
    let closed = state.silence_since.is_some() && state.silence_run >= params.hold - 1e-9;
    let truncated = !closed && frame.stamp - state.capture_start >= params.max_utterance - 1e-9;
    if !(closed || truncated) {
        return None;
    }
    let text = state.buffer.join(" ");
    state.buffer.clear();
    state.silence_run = 0.0;
    state.silence_since = None;
    state.phase = VocalPhase::Matching;
    Some(Captured { text, truncated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum VocalEvent {
    Triggered { stamp: f64 },
    Truncated { stamp: f64 },
    Utterance { stamp: f64, text: String },
    Matched { stamp: f64, intent: Intent, score: f64 },
    NotUnderstood { stamp: f64, text: String, score: f64 },
    Response { stamp: f64, text: String },
}

/// The full cascade as one node.
#[derive(Debug, Clone)]
pub struct VocalNode {
    pub catalogue: IntentCatalogue,
    pub params: VocalParams,
    pub state: PipelineState,
    pub pois: Vec<String>,
}

impl VocalNode {
    pub fn new(catalogue: IntentCatalogue, params: VocalParams, pois: Vec<String>) -> Self {
        Self {
            catalogue,
            params,
            state: PipelineState::default(),
            pois,
        }
    }

    pub fn set_trigger(&mut self, word: &str) -> Result<()> {
        self.catalogue.set_trigger(word)
    }

    pub fn process(&mut self, frame: &UtteranceFrame) -> Vec<VocalEvent> {
        let mut out = Vec::new();
        let t = frame.stamp;
        if self.state.phase == VocalPhase::Idle {
            if keyword_step(&mut self.state, frame, &self.catalogue.trigger) {
                out.push(VocalEvent::Triggered { stamp: t });
            }
            return out;
        }
        let Some(cap) = endpoint(&mut self.state, frame, &self.params) else {
            return out;
        };
        if cap.truncated {
            out.push(VocalEvent::Truncated { stamp: t });
        }
        out.push(VocalEvent::Utterance {
            stamp: t,
            text: cap.text.clone(),
        });
        let pois: Vec<&str> = self.pois.iter().map(String::as_str).collect();
        let outcome = match_intent(&cap.text, &self.catalogue, &pois, self.params.match_threshold);
        self.state.phase = VocalPhase::Responding;
        match &outcome {
            MatchOutcome::Matched { intent, score, .. } => out.push(VocalEvent::Matched {
                stamp: t,
                intent: intent.clone(),
                score: *score,
            }),
            MatchOutcome::NotUnderstood { score } => out.push(VocalEvent::NotUnderstood {
                stamp: t,
                text: cap.text,
                score: *score,
            }),
        }
        out.push(VocalEvent::Response {
            stamp: t,
            text: respond(&outcome),
        });
        self.state.phase = VocalPhase::Idle;
        out
    }
}

/// Frames for `tokens` spoken every `spacing` seconds from `start`, at `energy`.
pub fn speech_frames(start: f64, spacing: f64, tokens: &[&str], energy: f64) -> Vec<UtteranceFrame> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, w)| UtteranceFrame {
            stamp: start + i as f64 * spacing,
            energy,
            token: Some(w.to_string()),
        })
        .collect()
}

pub fn silence_frames(start: f64, spacing: f64, count: usize) -> Vec<UtteranceFrame> {
    (0..count)
        .map(|i| UtteranceFrame {
            stamp: start + i as f64 * spacing,
            energy: 0.0,
            token: None,
        })
        .collect()
}

/// Distinct normalised words across the catalogue phrases.
pub fn vocabulary(catalogue: &IntentCatalogue) -> BTreeSet<String> {
    catalogue
        .intents
        .values()
        .flatten()
        .flat_map(|p| normalize(p).split(' ').map(str::to_string).collect::<Vec<_>>())
        .collect()
}
