//! Per-node adaptive carrier-sensing thresholds.
//!
//! Each transmitter starts at the static threshold `t*` and moves in steps of
//! `δ_s`:
//!
//! * denied by carrier sensing on `n_slot` or more consecutive attempts
//!   (exposed-node symptom): raise, while staying at or below `t_max`;
//! * no ACK on `m_ack` or more consecutive transmissions (hidden-node
//!   symptom): broadcast a warning to all nodes within `h_W` hops;
//! * on receiving a fresh warning: lower, but never below `t*`.
//!
//! The threshold is stored as an integer number of steps above `t*`, so it
//! can never drift outside `[t*, t_max]` through rounding.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::carrier_sense::tcs_to_rcs;
use crate::channel::{ChannelParams, Point};
use crate::error::{Error, Result};

pub type NodeId = u32;

/// Size charged for one warning frame when accounting signaling overhead.
pub const WARNING_BITS: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    /// Step size δ_s (watts).
    pub delta_s: f64,
    /// Initial and minimum threshold t* (watts).
    pub t_cs_init: f64,
    /// Maximum threshold (watts).
    pub t_max: f64,
    pub m_ack: u32,
    pub n_slot: u32,
    pub h_w: u32,
}

impl AdaptiveParams {
    pub fn new(delta_s: f64, t_cs_init: f64, t_max: f64, m_ack: u32, n_slot: u32, h_w: u32) -> Result<Self> {
        let p = AdaptiveParams {
            delta_s,
            t_cs_init,
            t_max,
            m_ack,
            n_slot,
            h_w,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults relative to `t*`: `t_max = 10⁴·t*`, `δ_s = 20·t*`,
    /// `m_ack = 2`, `n_slot = 3`, `h_W = 1`.
    pub fn with_defaults(t_star: f64) -> Result<Self> {
        AdaptiveParams::new(20.0 * t_star, t_star, 1e4 * t_star, 2, 3, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_cs_init > 0.0 && self.t_cs_init.is_finite()) {
            return Err(Error::invalid("t_cs_init", format!("must be positive, got {}", self.t_cs_init)));
        }
        if !(self.delta_s > 0.0 && self.delta_s.is_finite()) {
            return Err(Error::invalid("delta_s", format!("must be positive, got {}", self.delta_s)));
        }
        if !(self.t_max >= self.t_cs_init && self.t_max.is_finite()) {
            return Err(Error::invalid("t_max", format!("must be >= t_cs_init, got {}", self.t_max)));
        }
        for (name, v) in [("m_ack", self.m_ack), ("n_slot", self.n_slot), ("h_w", self.h_w)] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Number of whole steps that fit between `t*` and `t_max`.
    pub fn max_level(&self) -> u32 {
        let k = ((self.t_max - self.t_cs_init) / self.delta_s).floor();
        // guard against t* + k·δ landing a rounding error above t_max
        let mut k = k.min(u32::MAX as f64) as u32;
        while k > 0 && self.level_to_tcs(k) > self.t_max {
            k -= 1;
        }
        k
    }

    pub fn level_to_tcs(&self, level: u32) -> f64 {
        self.t_cs_init + level as f64 * self.delta_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotOutcome {
    /// Backoff expired but carrier sensing blocked the transmission.
    Denied,
    TransmittedAcked,
    TransmittedNoAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HnWarning {
    pub source: NodeId,
    pub sequence: u64,
    pub ttl: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeAdaptiveState {
    /// Steps above `t*`.
    pub level: u32,
    pub denied_streak: u32,
    pub ack_fail_streak: u32,
    pub seen_warnings: HashSet<(NodeId, u64)>,
    next_sequence: u64,
}

impl NodeAdaptiveState {
    pub fn new() -> Self {
        NodeAdaptiveState::default()
    }

    pub fn t_cs(&self, params: &AdaptiveParams) -> f64 {
        params.level_to_tcs(self.level)
    }

    /// Stamp a new warning from this node. The node records it as seen so
    /// that echoes are ignored.
    pub fn issue_warning(&mut self, source: NodeId, params: &AdaptiveParams) -> HnWarning {
        let w = HnWarning {
            source,
            sequence: self.next_sequence,
            ttl: params.h_w,
        };
        self.next_sequence += 1;
        self.seen_warnings.insert((w.source, w.sequence));
        w
    }
}

/// Apply one transmission-slot outcome. Returns the new state and whether a
/// hidden-node warning must be emitted.
pub fn on_slot_outcome(
    mut state: NodeAdaptiveState,
    outcome: SlotOutcome,
    params: &AdaptiveParams,
) -> (NodeAdaptiveState, bool) {
    let mut warn = false;
    match outcome {
        SlotOutcome::Denied => {
            state.denied_streak = state.denied_streak.saturating_add(1);
            if state.denied_streak >= params.n_slot && state.level < params.max_level() {
                state.level += 1;
            }
        }
        SlotOutcome::TransmittedAcked => {
            state.denied_streak = 0;
            state.ack_fail_streak = 0;
        }
        SlotOutcome::TransmittedNoAck => {
            state.denied_streak = 0;
            state.ack_fail_streak += 1;
            if state.ack_fail_streak >= params.m_ack {
                warn = true;
                state.ack_fail_streak = 0;
            }
        }
    }
    (state, warn)
}

/// Handle an incoming warning. Returns the new state and the copy to
/// forward, if any hops remain.
pub fn on_warning_received(
    mut state: NodeAdaptiveState,
    w: HnWarning,
    _params: &AdaptiveParams,
) -> (NodeAdaptiveState, Option<HnWarning>) {
    if !state.seen_warnings.insert((w.source, w.sequence)) {
        return (state, None);
    }
    if state.level >= 1 {
        state.level -= 1;
    }
    let forward = (w.ttl > 1).then(|| HnWarning { ttl: w.ttl - 1, ..w });
    (state, forward)
}

/// CPCS threshold mapped to an IPCS separation, `((t_cs − N)/P)^(-1/α)`.
pub fn effective_rcs(state: &NodeAdaptiveState, params: &AdaptiveParams, channel: &ChannelParams) -> Result<f64> {
    tcs_to_rcs(state.t_cs(params), channel)
}

/// Undirected neighbor graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    adj: Vec<Vec<NodeId>>,
}

impl NeighborGraph {
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::invalid("edges", format!("edge ({u}, {v}) outside 0..{n}")));
            }
            if u != v {
                adj[u as usize].push(v);
                adj[v as usize].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(NeighborGraph { adj })
    }

    /// Nodes within `range` of each other are neighbors.
    pub fn from_positions(positions: &[Point], range: f64) -> Self {
        let n = positions.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if positions[i].distance(&positions[j]) <= range {
                    adj[i].push(j as NodeId);
                    adj[j].push(i as NodeId);
                }
            }
        }
        NeighborGraph { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u as usize]
    }

    pub fn mean_degree(&self) -> f64 {
        if self.adj.is_empty() {
            return 0.0;
        }
        self.adj.iter().map(Vec::len).sum::<usize>() as f64 / self.adj.len() as f64
    }
}

/// Flood `warning` from `origin`. Each node receives at most one copy, with
/// the TTL it would carry on arrival; the origin receives none.
pub fn propagate(warning: HnWarning, origin: NodeId, graph: &NeighborGraph) -> Vec<(NodeId, HnWarning)> {
    let mut seen = vec![false; graph.len()];
    seen[origin as usize] = true;
    let mut queue = VecDeque::from([(origin, warning.ttl)]);
    let mut out = Vec::new();
    while let Some((u, ttl)) = queue.pop_front() {
        if ttl == 0 {
            continue;
        }
        for &v in graph.neighbors(u) {
            if !seen[v as usize] {
                seen[v as usize] = true;
                let copy = HnWarning { ttl, ..warning };
                out.push((v, copy));
                queue.push_back((v, ttl - 1));
            }
        }
    }
    out
}
