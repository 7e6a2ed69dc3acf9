//! Simulator event log: CSV export, parsing, and independent replay of
//! reception verdicts.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{sinr_at, ChannelParams, Link, LinkId, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// Backoff expired and carrier sensing blocked the attempt.
    Denied,
    /// A node starts radiating a frame.
    EmitStart,
    EmitEnd,
    /// A frame was received with SINR at or above β throughout.
    RxOk,
    RxFail,
    /// DATA and ACK both got through.
    Success,
    /// The transmitter saw no ACK.
    Failure,
    /// The retry limit was exceeded and the packet discarded.
    Drop,
    Threshold,
    WarningEmit,
    WarningDeliver,
    FadingBlock,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Denied => "denied",
            EventKind::EmitStart => "emit_start",
            EventKind::EmitEnd => "emit_end",
            EventKind::RxOk => "rx_ok",
            EventKind::RxFail => "rx_fail",
            EventKind::Success => "success",
            EventKind::Failure => "failure",
            EventKind::Drop => "drop",
            EventKind::Threshold => "threshold",
            EventKind::WarningEmit => "warning_emit",
            EventKind::WarningDeliver => "warning_deliver",
            EventKind::FadingBlock => "fading_block",
        }
    }

    const ALL: [EventKind; 12] = [
        EventKind::Denied,
        EventKind::EmitStart,
        EventKind::EmitEnd,
        EventKind::RxOk,
        EventKind::RxFail,
        EventKind::Success,
        EventKind::Failure,
        EventKind::Drop,
        EventKind::Threshold,
        EventKind::WarningEmit,
        EventKind::WarningDeliver,
        EventKind::FadingBlock,
    ];
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid("event_kind", format!("unknown event kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    Data,
    Ack,
}

impl Frame {
    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Data => "data",
            Frame::Ack => "ack",
        }
    }
}

/// One log row. `node_id` is `2·k` for the transmitter of the `k`-th link
/// of the topology and `2·k + 1` for its receiver. `detail` holds space-separated `key=value` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub time_us: f64,
    pub node_id: u32,
    pub event_kind: EventKind,
    pub detail: String,
}

impl LogEvent {
    /// Value of `key` in the detail field.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail
            .split(' ')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }

    pub fn link(&self) -> Option<LinkId> {
        self.field("link").and_then(|v| v.parse().ok())
    }

    pub fn frame(&self) -> Option<Frame> {
        match self.field("frame") {
            Some("data") => Some(Frame::Data),
            Some("ack") => Some(Frame::Ack),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    time_us: f64,
    node_id: u32,
    event_kind: String,
    detail: String,
}

pub fn write_event_log<W: Write>(events: &[LogEvent], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(Row {
            time_us: e.time_us,
            node_id: e.node_id,
            event_kind: e.event_kind.as_str().to_owned(),
            detail: e.detail.clone(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_event_log<R: Read>(reader: R) -> Result<Vec<LogEvent>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        out.push(LogEvent {
            time_us: row.time_us,
            node_id: row.node_id,
            event_kind: row.event_kind.parse()?,
            detail: row.detail,
        });
    }
    Ok(out)
}

/// Verdict on one frame reception.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Verdict {
    pub link: LinkId,
    pub frame: Frame,
    /// Emission start time, in the log's µs representation.
    pub start_bits: u64,
    pub ok: bool,
}

/// Reception verdicts as the simulator recorded them, in log order.
pub fn logged_verdicts(events: &[LogEvent]) -> Result<Vec<Verdict>> {
    let mut starts: HashMap<(LinkId, Frame), f64> = HashMap::new();
    let mut out = Vec::new();
    for e in events {
        match e.event_kind {
            EventKind::EmitStart => {
                starts.insert(key(e)?, e.time_us);
            }
            EventKind::RxOk | EventKind::RxFail => {
                let k = key(e)?;
                let start = starts
                    .get(&k)
                    .ok_or_else(|| Error::invalid("event_log", format!("verdict without emission for link {}", k.0)))?;
                out.push(Verdict {
                    link: k.0,
                    frame: k.1,
                    start_bits: start.to_bits(),
                    ok: e.event_kind == EventKind::RxOk,
                });
            }
            _ => {}
        }
    }
    Ok(out)
}

fn key(e: &LogEvent) -> Result<(LinkId, Frame)> {
    match (e.link(), e.frame()) {
        (Some(l), Some(f)) => Ok((l, f)),
        _ => Err(Error::invalid("event_log", format!("malformed detail `{}`", e.detail))),
    }
}

struct Emission {
    node: u32,
    link: LinkId,
    frame: Frame,
    start: f64,
    end: f64,
}

/// Recompute every reception verdict from emission intervals alone, using
/// the channel model directly: a frame is received iff its SINR is at least
/// `β` at its own start and at every instant another emission begins while
/// it is on the air. Valid for runs without fading.
pub fn replay_verdicts(links: &[Link], params: &ChannelParams, events: &[LogEvent]) -> Result<Vec<Verdict>> {
    let endpoints = |node: u32| -> Result<Point> {
        let link = links
            .get(node as usize / 2)
            .ok_or_else(|| Error::invalid("event_log", format!("unknown node {node}")))?;
        Ok(if node % 2 == 0 { link.tx } else { link.rx })
    };

    let mut emissions: Vec<Emission> = Vec::new();
    let mut open: HashMap<u32, usize> = HashMap::new();
    for e in events {
        match e.event_kind {
            EventKind::EmitStart => {
                let (link, frame) = key(e)?;
                open.insert(e.node_id, emissions.len());
                emissions.push(Emission {
                    node: e.node_id,
                    link,
                    frame,
                    start: e.time_us,
                    end: f64::INFINITY,
                });
            }
            EventKind::EmitEnd => {
                let idx = open
                    .remove(&e.node_id)
                    .ok_or_else(|| Error::invalid("event_log", format!("node {} ends without start", e.node_id)))?;
                emissions[idx].end = e.time_us;
            }
            _ => {}
        }
    }

    let mut out = Vec::new();
    for e in events {
        if !matches!(e.event_kind, EventKind::RxOk | EventKind::RxFail) {
            continue;
        }
        let (link, frame) = key(e)?;
        let own = emissions
            .iter()
            .rev()
            .find(|m| m.link == link && m.frame == frame && m.end == e.time_us)
            .ok_or_else(|| Error::invalid("event_log", format!("no emission ends at verdict for link {link}")))?;
        let own_tx = endpoints(own.node)?;
        let observer = endpoints(own.node ^ 1)?;
        let others: Vec<&Emission> = emissions
            .iter()
            .filter(|m| m.node != own.node && m.start < own.end && m.end > own.start)
            .collect();
        let mut checkpoints = vec![own.start];
        checkpoints.extend(others.iter().map(|m| m.start).filter(|&s| s > own.start));
        let mut ok = true;
        for t in checkpoints {
            let concurrent: Vec<Point> = others
                .iter()
                .filter(|m| m.start <= t && m.end > t)
                .map(|m| endpoints(m.node))
                .collect::<Result<_>>()?;
            if sinr_at(&observer, &own_tx, &concurrent, params, None, None)? < params.beta {
                ok = false;
                break;
            }
        }
        out.push(Verdict {
            link,
            frame,
            start_bits: own.start.to_bits(),
            ok,
        });
    }
    Ok(out)
}

/// Per-link success and failure counts recovered from the log.
pub fn count_outcomes(events: &[LogEvent]) -> Result<HashMap<LinkId, (u64, u64)>> {
    let mut counts: HashMap<LinkId, (u64, u64)> = HashMap::new();
    for e in events {
        let slot = match e.event_kind {
            EventKind::Success => 0,
            EventKind::Failure => 1,
            _ => continue,
        };
        let link = e
            .link()
            .ok_or_else(|| Error::invalid("event_log", format!("malformed detail `{}`", e.detail)))?;
        let c = counts.entry(link).or_default();
        if slot == 0 {
            c.0 += 1;
        } else {
            c.1 += 1;
        }
    }
    Ok(counts)
}
