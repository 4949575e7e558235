//! Plain-text scenario scripts.
//!
//! ```text
//! seed 7
//! mode stapled
//! issue meter-1 365
//! handshake meter-1 expect ACCEPT
//! revoke meter-1 keyCompromise
//! advance 8d
//! handshake meter-1 direct expect REJECT(REVOKED_STATUS)
//! ```
//!
//! Other events: `refresh`, `maintain`, `upstream up|down`. `#` starts a
//! comment.

use chrono::Duration;

use super::world::{ScenarioStats, SimError, World};
use super::{Mode, Verdict};
use crate::clock::parse_duration;
use crate::codec::RevocationReason;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Issue { name: String, days: u32 },
    Revoke { name: String, reason: RevocationReason },
    Refresh,
    Maintain,
    Advance(Duration),
    Upstream(bool),
    Handshake {
        name: String,
        mode: Option<Mode>,
        expect: Option<Verdict>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Command {
    pub line: usize,
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Script {
    pub seed: u64,
    pub mode: Mode,
    pub commands: Vec<Command>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScriptReport {
    pub stats: ScenarioStats,
    /// One line per handshake: `line N: handshake NAME (mode) -> VERDICT`.
    pub transcript: Vec<String>,
}

pub fn parse_event(text: &str) -> Result<Event, String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let arg = |i: usize, what: &str| {
        words
            .get(i)
            .copied()
            .ok_or_else(|| format!("{}: missing {what}", words[0]))
    };
    let Some(&verb) = words.first() else {
        return Err("empty event".into());
    };
    let event = match verb {
        "issue" => Event::Issue {
            name: arg(1, "name")?.to_string(),
            days: match words.get(2) {
                Some(d) => d.parse().map_err(|_| format!("bad validity {d:?}"))?,
                None => 365,
            },
        },
        "revoke" => Event::Revoke {
            name: arg(1, "name")?.to_string(),
            reason: match words.get(2) {
                Some(r) => r.parse().map_err(|_| format!("bad reason {r:?}"))?,
                None => RevocationReason::Unspecified,
            },
        },
        "refresh" => Event::Refresh,
        "maintain" => Event::Maintain,
        "advance" => {
            let d = arg(1, "duration")?;
            Event::Advance(parse_duration(d).ok_or_else(|| format!("bad duration {d:?}"))?)
        }
        "upstream" => match arg(1, "up|down")? {
            "up" => Event::Upstream(true),
            "down" => Event::Upstream(false),
            other => return Err(format!("upstream: expected up|down, got {other:?}")),
        },
        "handshake" => {
            let name = arg(1, "name")?.to_string();
            let mut mode = None;
            let mut expect = None;
            let mut i = 2;
            while i < words.len() {
                if words[i] == "expect" {
                    let v = arg(i + 1, "verdict")?;
                    expect = Some(v.parse()?);
                    i += 2;
                } else {
                    mode = Some(words[i].parse()?);
                    i += 1;
                }
            }
            Event::Handshake { name, mode, expect }
        }
        other => return Err(format!("unknown event {other:?}")),
    };
    if !matches!(event, Event::Handshake { .. }) {
        let max = match verb {
            "issue" | "revoke" => 3,
            "advance" | "upstream" => 2,
            _ => 1,
        };
        if words.len() > max {
            return Err(format!("{verb}: unexpected {:?}", words[max]));
        }
    }
    Ok(event)
}

/// `@N event`: apply `event` before handshake `N` of a scenario.
pub fn parse_fault(text: &str) -> Result<(usize, Event), String> {
    let rest = text
        .trim()
        .strip_prefix('@')
        .ok_or_else(|| format!("fault {text:?} must start with @N"))?;
    let (n, event) = rest
        .split_once(char::is_whitespace)
        .ok_or_else(|| format!("fault {text:?} has no event"))?;
    let n = n.parse().map_err(|_| format!("bad handshake index {n:?}"))?;
    Ok((n, parse_event(event)?))
}

pub fn parse_script(text: &str) -> Result<Script, SimError> {
    let mut script = Script {
        seed: 1,
        mode: Mode::Stapled,
        commands: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |message: String| SimError::Script { line, message };
        let mut words = body.split_whitespace();
        match words.next() {
            Some("seed") => {
                let v = words.next().ok_or_else(|| err("seed: missing value".into()))?;
                script.seed = v.parse().map_err(|_| err(format!("bad seed {v:?}")))?;
            }
            Some("mode") => {
                let v = words.next().ok_or_else(|| err("mode: missing value".into()))?;
                script.mode = v.parse().map_err(err)?;
            }
            _ => script.commands.push(Command {
                line,
                event: parse_event(body).map_err(err)?,
            }),
        }
    }
    Ok(script)
}

/// Runs a script in a fresh world. A failed `expect` aborts with the line.
pub fn run_script(script: &Script) -> Result<ScriptReport, SimError> {
    let mut world = World::new(script.seed)?;
    let mut transcript = Vec::new();
    for cmd in &script.commands {
        let outcome = world
            .apply(&cmd.event, script.mode)
            .map_err(|e| SimError::Script {
                line: cmd.line,
                message: e.to_string(),
            })?;
        if let (Some(o), Event::Handshake { name, mode, .. }) = (outcome, &cmd.event) {
            transcript.push(format!(
                "line {}: handshake {name} ({}) -> {}",
                cmd.line,
                mode.unwrap_or(script.mode),
                o.verdict
            ));
        }
    }
    Ok(ScriptReport {
        stats: world.stats(),
        transcript,
    })
}
