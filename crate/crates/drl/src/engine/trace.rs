//! Replayable trace files.
//!
//! A trace is line-oriented text. The header line carries the seed, a hash
//! of the scheduler policy, and the format version; each subsequent event
//! line is `<step> <Rule>(<args>)`, with refobs rendered `token:owner->target`.
//! Oracle checkpoints (`ORACLE <step> terminated=[...]`), detection reports
//! (`DETECT <step> <algorithm> finalized=[...] removed=[...]`) and the final
//! `END hash=...` line interleave with events. Re-applying the event lines
//! from the initial configuration reproduces the terminal configuration
//! exactly; the hash pins that down.

use super::scheduler::fnv64;
use super::{Event, Message};
use crate::facts::{ActorName, Refob};
use std::fmt;
use thiserror::Error;

pub const TRACE_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("corrupt trace: {0}")]
    Corrupt(String),
    #[error("trace version mismatch: found {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },
}

fn corrupt(msg: impl Into<String>) -> TraceError {
    TraceError::Corrupt(msg.into())
}

/// A recorded check result embedded in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointLine {
    Oracle { step: u64, terminated: Vec<ActorName> },
    Detect {
        step: u64,
        algorithm: String,
        finalized: Vec<ActorName>,
        removed: Vec<ActorName>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceLine {
    Event { step: u64, event: Event },
    Checkpoint(CheckpointLine),
}

/// A full recorded run: seed, policy fingerprint, interleaved event and
/// checkpoint lines, and the hash of the terminal configuration rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub policy_hash: u64,
    /// Extra header fields (harness settings needed to re-run checks).
    pub meta: Vec<(String, String)>,
    pub lines: Vec<TraceLine>,
    pub terminal_hash: u64,
}

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = (u64, &Event)> {
        self.lines.iter().filter_map(|l| match l {
            TraceLine::Event { step, event } => Some((*step, event)),
            _ => None,
        })
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        write!(out, "DRLTRACE {TRACE_VERSION} seed={} policy={:016x}", self.seed, self.policy_hash)
            .unwrap();
        for (k, v) in &self.meta {
            write!(out, " {k}={v}").unwrap();
        }
        out.push('\n');
        for line in &self.lines {
            match line {
                TraceLine::Event { step, event } => writeln!(out, "{step} {event}").unwrap(),
                TraceLine::Checkpoint(CheckpointLine::Oracle { step, terminated }) => {
                    writeln!(out, "ORACLE {step} terminated={}", render_names(terminated)).unwrap()
                }
                TraceLine::Checkpoint(CheckpointLine::Detect {
                    step,
                    algorithm,
                    finalized,
                    removed,
                }) => writeln!(
                    out,
                    "DETECT {step} {algorithm} finalized={} removed={}",
                    render_names(finalized),
                    render_names(removed)
                )
                .unwrap(),
            }
        }
        writeln!(out, "END hash={:016x}", self.terminal_hash).unwrap();
        out
    }
}

fn render_names(names: &[ActorName]) -> String {
    let parts: Vec<String> = names.iter().map(|n| n.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn render_refobs(refs: &[Refob]) -> String {
    let parts: Vec<String> = refs.iter().map(|r| r.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

pub(crate) fn render_message(msg: &Message) -> String {
    match msg {
        Message::App { via, contents } => {
            let via = via.map(|r| r.to_string()).unwrap_or_else(|| "null".into());
            format!("AppMsg(x={via}, refs={})", render_refobs(contents))
        }
        Message::Info { created_using, created } => {
            format!("InfoMsg(y={created_using}, z={created})")
        }
        Message::Release { refob, count } => format!("ReleaseMsg(x={refob}, n={count})"),
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Spawn { refob } => write!(f, "Spawn(x={refob})"),
            Event::Send { via, using, sent } => write!(
                f,
                "Send(x={via}, ys={}, zs={})",
                render_refobs(using),
                render_refobs(sent)
            ),
            Event::Receive { at, via, contents } => {
                let via = via.map(|r| r.to_string()).unwrap_or_else(|| "null".into());
                write!(f, "Receive(at={at}, x={via}, refs={})", render_refobs(contents))
            }
            Event::Idle { actor } => write!(f, "Idle({actor})"),
            Event::SendInfo { created_using, created } => {
                write!(f, "SendInfo(y={created_using}, z={created})")
            }
            Event::Info { created_using, created } => {
                write!(f, "Info(y={created_using}, z={created})")
            }
            Event::SendRelease { refob } => write!(f, "SendRelease(x={refob})"),
            Event::Release { refob, count } => write!(f, "Release(x={refob}, n={count})"),
            Event::Compaction { refob } => write!(f, "Compaction(x={refob})"),
            Event::Snapshot { actor } => write!(f, "Snapshot({actor})"),
            Event::In { to, contents } => {
                write!(f, "In(to={to}, refs={})", render_refobs(contents))
            }
            Event::Out { via, contents } => {
                write!(f, "Out(x={via}, refs={})", render_refobs(contents))
            }
            Event::ReleaseOut { refob } => write!(f, "ReleaseOut(x={refob})"),
            Event::InfoOut { created_using, created } => {
                write!(f, "InfoOut(y={created_using}, z={created})")
            }
        }
    }
}

// --- parsing ---

/// Split `a=1, b=[x, y], c` at top-level commas.
fn split_args(s: &str) -> Result<Vec<&str>, TraceError> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(corrupt(format!("unbalanced brackets in {s:?}")));
    }
    let last = s[start..].trim();
    if !last.is_empty() {
        out.push(last);
    }
    Ok(out)
}

fn arg_value<'a>(args: &[(&'a str, &'a str)], key: &str, ctx: &str) -> Result<&'a str, TraceError> {
    args.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| corrupt(format!("{ctx}: missing argument {key}")))
}

fn parse_keyed(s: &str) -> Result<Vec<(&str, &str)>, TraceError> {
    split_args(s)?
        .into_iter()
        .map(|part| {
            part.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| corrupt(format!("expected key=value, found {part:?}")))
        })
        .collect()
}

fn parse_refob(s: &str) -> Result<Refob, TraceError> {
    Refob::parse(s).ok_or_else(|| corrupt(format!("bad refob {s:?}")))
}

fn parse_opt_refob(s: &str) -> Result<Option<Refob>, TraceError> {
    if s == "null" {
        Ok(None)
    } else {
        parse_refob(s).map(Some)
    }
}

fn parse_name(s: &str) -> Result<ActorName, TraceError> {
    ActorName::parse(s).ok_or_else(|| corrupt(format!("bad actor name {s:?}")))
}

fn parse_list(s: &str) -> Result<Vec<&str>, TraceError> {
    let inner = s
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| corrupt(format!("expected a list, found {s:?}")))?;
    split_args(inner)
}

fn parse_refob_list(s: &str) -> Result<Vec<Refob>, TraceError> {
    parse_list(s)?.into_iter().map(parse_refob).collect()
}

fn parse_name_list(s: &str) -> Result<Vec<ActorName>, TraceError> {
    parse_list(s)?.into_iter().map(parse_name).collect()
}

pub fn parse_event(s: &str) -> Result<Event, TraceError> {
    let open = s.find('(').ok_or_else(|| corrupt(format!("bad event {s:?}")))?;
    let close = s.rfind(')').ok_or_else(|| corrupt(format!("bad event {s:?}")))?;
    let rule = &s[..open];
    let body = &s[open + 1..close];
    let event = match rule {
        "Idle" => Event::Idle { actor: parse_name(body)? },
        "Snapshot" => Event::Snapshot { actor: parse_name(body)? },
        _ => {
            let args = parse_keyed(body)?;
            let get = |key: &str| arg_value(&args, key, rule);
            match rule {
                "Spawn" => Event::Spawn { refob: parse_refob(get("x")?)? },
                "Send" => Event::Send {
                    via: parse_refob(get("x")?)?,
                    using: parse_refob_list(get("ys")?)?,
                    sent: parse_refob_list(get("zs")?)?,
                },
                "Receive" => Event::Receive {
                    at: parse_name(get("at")?)?,
                    via: parse_opt_refob(get("x")?)?,
                    contents: parse_refob_list(get("refs")?)?,
                },
                "SendInfo" => Event::SendInfo {
                    created_using: parse_refob(get("y")?)?,
                    created: parse_refob(get("z")?)?,
                },
                "Info" => Event::Info {
                    created_using: parse_refob(get("y")?)?,
                    created: parse_refob(get("z")?)?,
                },
                "SendRelease" => Event::SendRelease { refob: parse_refob(get("x")?)? },
                "Release" => Event::Release {
                    refob: parse_refob(get("x")?)?,
                    count: get("n")?
                        .parse()
                        .map_err(|_| corrupt("bad release count"))?,
                },
                "Compaction" => Event::Compaction { refob: parse_refob(get("x")?)? },
                "In" => Event::In {
                    to: parse_name(get("to")?)?,
                    contents: parse_refob_list(get("refs")?)?,
                },
                "Out" => Event::Out {
                    via: parse_refob(get("x")?)?,
                    contents: parse_refob_list(get("refs")?)?,
                },
                "ReleaseOut" => Event::ReleaseOut { refob: parse_refob(get("x")?)? },
                "InfoOut" => Event::InfoOut {
                    created_using: parse_refob(get("y")?)?,
                    created: parse_refob(get("z")?)?,
                },
                other => return Err(corrupt(format!("unknown rule {other:?}"))),
            }
        }
    };
    Ok(event)
}

pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| corrupt("empty trace"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("DRLTRACE") {
        return Err(corrupt("missing DRLTRACE header"));
    }
    let version = fields.next().unwrap_or("");
    if version != TRACE_VERSION {
        return Err(TraceError::VersionMismatch {
            found: version.to_string(),
            expected: TRACE_VERSION.to_string(),
        });
    }
    let mut seed = None;
    let mut policy_hash = None;
    let mut meta = Vec::new();
    for field in fields {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| corrupt(format!("bad header field {field:?}")))?;
        match k {
            "seed" => seed = Some(v.parse().map_err(|_| corrupt("bad seed"))?),
            "policy" => {
                policy_hash = Some(u64::from_str_radix(v, 16).map_err(|_| corrupt("bad policy hash"))?)
            }
            _ => meta.push((k.to_string(), v.to_string())),
        }
    }
    let seed = seed.ok_or_else(|| corrupt("header missing seed"))?;
    let policy_hash = policy_hash.ok_or_else(|| corrupt("header missing policy hash"))?;

    let mut out_lines = Vec::new();
    let mut terminal_hash = None;
    for raw in lines {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if terminal_hash.is_some() {
            return Err(corrupt("content after END line"));
        }
        let (head, rest) = line
            .split_once(' ')
            .ok_or_else(|| corrupt(format!("bad line {line:?}")))?;
        match head {
            "END" => {
                let v = rest
                    .strip_prefix("hash=")
                    .ok_or_else(|| corrupt("bad END line"))?;
                terminal_hash =
                    Some(u64::from_str_radix(v, 16).map_err(|_| corrupt("bad terminal hash"))?);
            }
            "ORACLE" => {
                let (step, rest) = rest
                    .split_once(' ')
                    .ok_or_else(|| corrupt("bad ORACLE line"))?;
                let step = step.parse().map_err(|_| corrupt("bad ORACLE step"))?;
                let names = rest
                    .strip_prefix("terminated=")
                    .ok_or_else(|| corrupt("bad ORACLE line"))?;
                out_lines.push(TraceLine::Checkpoint(CheckpointLine::Oracle {
                    step,
                    terminated: parse_name_list(names)?,
                }));
            }
            "DETECT" => {
                let mut parts = rest.splitn(3, ' ');
                let step = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| corrupt("bad DETECT step"))?;
                let algorithm = parts
                    .next()
                    .ok_or_else(|| corrupt("bad DETECT line"))?
                    .to_string();
                let tail = parts.next().ok_or_else(|| corrupt("bad DETECT line"))?;
                let (fin, rem) = tail
                    .split_once("] removed=")
                    .ok_or_else(|| corrupt("bad DETECT line"))?;
                let finalized = parse_name_list(&format!(
                    "{}]",
                    fin.strip_prefix("finalized=").ok_or_else(|| corrupt("bad DETECT line"))?
                ))?;
                let removed = parse_name_list(rem)?;
                out_lines.push(TraceLine::Checkpoint(CheckpointLine::Detect {
                    step,
                    algorithm,
                    finalized,
                    removed,
                }));
            }
            step => {
                let step = step
                    .parse()
                    .map_err(|_| corrupt(format!("bad step in line {line:?}")))?;
                out_lines.push(TraceLine::Event { step, event: parse_event(rest)? });
            }
        }
    }
    Ok(Trace {
        seed,
        policy_hash,
        meta,
        lines: out_lines,
        terminal_hash: terminal_hash.ok_or_else(|| corrupt("missing END line"))?,
    })
}

/// Hash of a terminal configuration rendering, as recorded in END lines.
pub fn config_hash(rendering: &str) -> u64 {
    fnv64(rendering.as_bytes())
}
