//! JSON-lines event logs: one header line, then one wire message per line.

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use marvin_core::bus::{Bus, Subscription};
use marvin_core::messages::Message;
use serde::{Deserialize, Serialize};

use crate::error::GatewayError;
use crate::wire::{decode, from_envelope, WireMessage};

pub const LOG_FORMAT: &str = "marvin-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LogHeader {
    pub fn new(scenario: Option<&str>, seed: Option<u64>) -> Self {
        Self {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            scenario: scenario.map(str::to_string),
            seed,
        }
    }
}

/// Appends every bus message to a writer.
pub struct Recorder<W: Write> {
    out: W,
    sub: Subscription<Message>,
    lines: u64,
}

impl<W: Write> Recorder<W> {
    pub fn new(bus: &Bus<Message>, mut out: W, header: &LogHeader) -> Result<Self, GatewayError> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            sub: bus.subscribe_all(1 << 16),
            lines: 0,
        })
    }

    /// Writes everything published since the last call; returns the new lines.
    pub fn pump(&mut self) -> Result<Vec<WireMessage>, GatewayError> {
        let mut written = Vec::new();
        for env in self.sub.drain() {
            let w = from_envelope(&env)?;
            serde_json::to_writer(&mut self.out, &w)?;
            self.out.write_all(b"\n")?;
            written.push(w);
        }
        self.lines += written.len() as u64;
        Ok(written)
    }

    /// Messages lost to queue overflow (zero when pumped every tick).
    pub fn dropped(&self) -> u64 {
        self.sub.dropped()
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn finish(mut self) -> Result<W, GatewayError> {
        self.pump()?;
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogContents {
    pub header: LogHeader,
    pub messages: Vec<WireMessage>,
    /// The final line was incomplete and has been skipped.
    pub truncated: bool,
}

/// Reads a log, refusing other versions and stopping at an incomplete last line.
pub fn read_log<R: BufRead>(mut input: R) -> Result<LogContents, GatewayError> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Err(GatewayError::Parse {
            line: 1,
            msg: "empty log".into(),
        });
    }
    let header: LogHeader = serde_json::from_str(line.trim_end()).map_err(|e| GatewayError::Parse {
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    if header.format != LOG_FORMAT || header.version != LOG_VERSION {
        return Err(GatewayError::Version {
            expected: format!("{LOG_FORMAT} v{LOG_VERSION}"),
            found: format!("{} v{}", header.format, header.version),
        });
    }
    let mut messages = Vec::new();
    let mut lineno = 1;
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let text = line.trim_end();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<WireMessage>(text) {
            Ok(w) => messages.push(w),
            Err(_) if !complete => {
                return Ok(LogContents {
                    header,
                    messages,
                    truncated: true,
                })
            }
            Err(e) => {
                return Err(GatewayError::Parse {
                    line: lineno,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(LogContents {
        header,
        messages,
        truncated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    pub published: usize,
    pub last_stamp: Option<f64>,
}

/// Republishes logged messages with their original stamps.
///
/// `speed` paces the replay against wall time (1.0 = real time); `None`
/// publishes as fast as possible.
pub fn replay(log: &LogContents, bus: &Bus<Message>, speed: Option<f64>) -> Result<ReplayReport, GatewayError> {
    let publisher = bus.publisher("replay");
    let started = Instant::now();
    let t0 = log.messages.first().map(|m| m.stamp).unwrap_or(0.0);
    let mut report = ReplayReport {
        published: 0,
        last_stamp: None,
    };
    for w in &log.messages {
        let msg = decode(w)?;
        if let Some(s) = speed.filter(|s| *s > 0.0) {
            let due = Duration::from_secs_f64(((w.stamp - t0) / s).max(0.0));
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        bus.set_clock(w.stamp);
        publisher.publish_at(&w.topic, msg, w.stamp)?;
        report.published += 1;
        report.last_stamp = Some(w.stamp);
    }
    Ok(report)
}
