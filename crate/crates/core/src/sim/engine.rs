use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fading::sample_rician_gain;
use super::log::{EventKind, Frame, LogEvent};
use super::{LinkStats, SimConfig, SimOutput, SimReport, Sensing, ThresholdSample};
use crate::adaptive::{
    on_slot_outcome, on_warning_received, propagate, AdaptiveParams, HnWarning, NeighborGraph, NodeAdaptiveState,
    SlotOutcome, WARNING_BITS,
};
use crate::carrier_sense::{ipcs_counter_update, max_tx_distance, rcs_to_tcs, tcs_to_rcs, CsConfig, IpcsState, Mechanism};
use crate::channel::{path_loss, ChannelParams, Link, Point};
use crate::error::Result;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Block(u32),
    Warnings(u32),
    Expire(u32),
    DataEnd(u32),
    AckStart(u32),
    AckEnd(u32),
    AckTimeout(u32),
}

impl Ev {
    /// Secondary ordering key for simultaneous events: global events first,
    /// then by node id.
    fn tie_key(self) -> u64 {
        match self {
            Ev::Block(_) | Ev::Warnings(_) => 0,
            Ev::Expire(l) | Ev::DataEnd(l) | Ev::AckStart(l) | Ev::AckEnd(l) | Ev::AckTimeout(l) => 1 + l as u64,
        }
    }
}

struct Queued {
    time: f64,
    tie: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.tie.cmp(&self.tie))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Sensing state of one transmitter.
enum Threshold {
    Cpcs { t_cs: f64 },
    Ipcs { r_cs: f64, step: f64, counter: IpcsState },
}

#[derive(Debug, Clone, Copy)]
struct Reception {
    observer: usize,
    emitter: usize,
    signal: f64,
    interference: f64,
    ok: bool,
}

struct LinkState {
    cw: u32,
    retries: u32,
    threshold: Threshold,
    adaptive: NodeAdaptiveState,
    reception: Option<Reception>,
    stats: LinkStats,
}

/// Unordered set of indices with O(1) insert and remove.
struct IndexSet {
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl IndexSet {
    fn new(capacity: usize) -> Self {
        IndexSet {
            items: Vec::new(),
            pos: vec![NONE; capacity],
        }
    }

    fn insert(&mut self, x: usize) {
        debug_assert_eq!(self.pos[x], NONE);
        self.pos[x] = self.items.len();
        self.items.push(x);
    }

    fn remove(&mut self, x: usize) {
        let p = self.pos[x];
        debug_assert_ne!(p, NONE);
        self.items.swap_remove(p);
        if p < self.items.len() {
            self.pos[self.items[p]] = p;
        }
        self.pos[x] = NONE;
    }
}

pub(super) struct Engine<'a> {
    cfg: &'a SimConfig,
    channel: ChannelParams,
    n_nodes: usize,
    /// `base[e·M + o]`: unfaded power from node `e` at node `o`.
    base: Vec<f64>,
    /// Faded power; empty while gains are all one.
    faded: Vec<f64>,
    links: Vec<LinkState>,
    ids: Vec<u32>,
    adaptive: Option<AdaptiveParams>,
    graph: Option<NeighborGraph>,
    exchanges: IndexSet,
    emitters: IndexSet,
    receiving: IndexSet,
    queue: BinaryHeap<Queued>,
    seq: u64,
    now: f64,
    end: f64,
    rng: ChaCha8Rng,
    fading_rng: ChaCha8Rng,
    pending_warnings: Vec<Vec<(u32, HnWarning)>>,
    events: Vec<LogEvent>,
    thresholds: Vec<ThresholdSample>,
    warnings_emitted: u64,
    warnings_delivered: u64,
    processed: u64,
    data_us: f64,
    ack_us: f64,
}

fn tx_node(link: usize) -> usize {
    2 * link
}

fn rx_node(link: usize) -> usize {
    2 * link + 1
}

impl<'a> Engine<'a> {
    pub(super) fn new(links: &[Link], cfg: &'a SimConfig) -> Result<Self> {
        let channel = cfg.channel;
        let n = links.len();
        let m = 2 * n;
        let nodes: Vec<Point> = links.iter().flat_map(|l| [l.tx, l.rx]).collect();
        let mut base = vec![0.0; m * m];
        for e in 0..m {
            for o in 0..m {
                if e != o {
                    base[e * m + o] = channel.power * path_loss(nodes[e].distance(&nodes[o]), channel.alpha);
                }
            }
        }

        let adaptive = match cfg.sensing {
            Sensing::Adaptive { params, .. } => Some(params),
            Sensing::Static(_) => None,
        };
        let graph = adaptive.map(|_| {
            let range = cfg
                .neighbor_range
                .unwrap_or_else(|| max_tx_distance(&channel).unwrap_or(f64::INFINITY));
            let tx: Vec<Point> = links.iter().map(|l| l.tx).collect();
            NeighborGraph::from_positions(&tx, range)
        });

        let mut states = Vec::with_capacity(n);
        for l in links {
            let threshold = match cfg.sensing {
                Sensing::Static(CsConfig::Cpcs { t_cs }) => Threshold::Cpcs { t_cs },
                Sensing::Static(CsConfig::Ipcs { r_cs }) => Threshold::Ipcs {
                    r_cs,
                    step: channel.power * path_loss(r_cs, channel.alpha),
                    counter: IpcsState::default(),
                },
                Sensing::Adaptive { mechanism: Mechanism::Cpcs, params } => Threshold::Cpcs { t_cs: params.t_cs_init },
                Sensing::Adaptive { mechanism: Mechanism::Ipcs, params } => {
                    let r_cs = tcs_to_rcs(params.t_cs_init, &channel)?;
                    Threshold::Ipcs {
                        r_cs,
                        step: channel.power * path_loss(r_cs, channel.alpha),
                        counter: IpcsState::default(),
                    }
                }
            };
            states.push(LinkState {
                cw: cfg.mac.cw_min,
                retries: 0,
                threshold,
                adaptive: NodeAdaptiveState::new(),
                reception: None,
                stats: LinkStats {
                    link_id: l.id,
                    goodput_bps: 0.0,
                    tx_attempts: 0,
                    successes: 0,
                    failures: 0,
                    data_failures: 0,
                    ack_failures: 0,
                    drops: 0,
                    denied: 0,
                    failure_rate: 0.0,
                    threshold_trace: Vec::new(),
                },
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut fading_rng = rng.clone();
        fading_rng.set_stream(1);
        rng.set_stream(0);

        Ok(Engine {
            cfg,
            channel,
            n_nodes: m,
            base,
            faded: Vec::new(),
            links: states,
            ids: links.iter().map(|l| l.id).collect(),
            adaptive,
            graph,
            exchanges: IndexSet::new(n),
            emitters: IndexSet::new(m),
            receiving: IndexSet::new(n),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            end: cfg.duration_s * 1e6,
            rng,
            fading_rng,
            pending_warnings: Vec::new(),
            events: Vec::new(),
            thresholds: Vec::new(),
            warnings_emitted: 0,
            warnings_delivered: 0,
            processed: 0,
            data_us: cfg.mac.data_airtime_us(),
            ack_us: cfg.mac.ack_airtime_us(),
        })
    }

    #[inline]
    fn power(&self, emitter: usize, observer: usize) -> f64 {
        let k = emitter * self.n_nodes + observer;
        if self.faded.is_empty() {
            self.base[k]
        } else {
            self.faded[k]
        }
    }

    fn schedule(&mut self, time: f64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Queued {
            time,
            tie: ev.tie_key(),
            seq: self.seq,
            ev,
        });
    }

    fn log(&mut self, node: usize, kind: EventKind, detail: impl FnOnce() -> String) {
        if self.cfg.record_events {
            self.events.push(LogEvent {
                time_us: self.now,
                node_id: node as u32,
                event_kind: kind,
                detail: detail(),
            });
        }
    }

    /// Log with a `link=<id>` prefix in the detail.
    fn log_link(&mut self, node: usize, kind: EventKind, link: usize, rest: impl FnOnce() -> String) {
        if self.cfg.record_events {
            let id = self.ids[link];
            let rest = rest();
            let detail = if rest.is_empty() { format!("link={id}") } else { format!("link={id} {rest}") };
            self.log(node, kind, || detail);
        }
    }

    fn backoff(&mut self, cw: u32) -> f64 {
        let slots = self.rng.random_range(0..=cw) as f64 + self.rng.random::<f64>();
        self.cfg.mac.difs_us + slots * self.cfg.mac.slot_us
    }

    fn current_tcs(&self, link: usize) -> f64 {
        match &self.links[link].threshold {
            Threshold::Cpcs { t_cs } => *t_cs,
            Threshold::Ipcs { r_cs, .. } => rcs_to_tcs(*r_cs, &self.channel).unwrap_or(f64::INFINITY),
        }
    }

    fn record_threshold(&mut self, link: usize) {
        let t = self.current_tcs(link);
        self.links[link].stats.threshold_trace.push((self.now, t));
        self.thresholds.push(ThresholdSample {
            time_us: self.now,
            node_id: link as u32,
            t_cs_watts: t,
        });
        self.log_link(tx_node(link), EventKind::Threshold, link, || format!("t_cs={t}"));
    }

    pub(super) fn run(mut self) -> Result<SimOutput> {
        for i in 0..self.links.len() {
            self.record_threshold(i);
            let t = self.backoff(self.cfg.mac.cw_min);
            self.schedule(t, Ev::Expire(i as u32));
        }
        let blocks = self.cfg.fading.blocks.clone();
        for (k, b) in blocks.iter().enumerate() {
            if b.start_us < self.end {
                self.schedule(b.start_us, Ev::Block(k as u32));
            }
        }

        while let Some(q) = self.queue.pop() {
            if q.time >= self.end {
                break;
            }
            self.now = q.time;
            self.processed += 1;
            match q.ev {
                Ev::Block(k) => self.on_block(k as usize),
                Ev::Warnings(k) => self.on_warnings(k as usize),
                Ev::Expire(l) => self.on_expire(l as usize),
                Ev::DataEnd(l) => self.on_data_end(l as usize),
                Ev::AckStart(l) => self.on_ack_start(l as usize),
                Ev::AckEnd(l) => self.on_ack_end(l as usize),
                Ev::AckTimeout(l) => self.finish_exchange(l as usize, false),
            }
        }
        Ok(self.finish())
    }

    fn finish(self) -> SimOutput {
        let duration = self.cfg.duration_s;
        let bits = self.cfg.mac.payload_bits();
        let mut stats: Vec<LinkStats> = self.links.into_iter().map(|l| l.stats).collect();
        for s in &mut stats {
            s.goodput_bps = s.successes as f64 * bits / duration;
            let sent = s.successes + s.failures;
            s.failure_rate = if sent == 0 { 0.0 } else { s.failures as f64 / sent as f64 };
        }
        let sum = |f: fn(&LinkStats) -> u64| stats.iter().map(f).sum::<u64>();
        let successes = sum(|s| s.successes);
        let failures = sum(|s| s.failures);
        let report = SimReport {
            duration_s: duration,
            aggregate_goodput_bps: stats.iter().map(|s| s.goodput_bps).sum(),
            failure_rate: if successes + failures == 0 {
                0.0
            } else {
                failures as f64 / (successes + failures) as f64
            },
            successes,
            failures,
            data_failures: sum(|s| s.data_failures),
            ack_failures: sum(|s| s.ack_failures),
            denied: sum(|s| s.denied),
            warnings_emitted: self.warnings_emitted,
            warnings_delivered: self.warnings_delivered,
            overhead_bits: self.warnings_delivered * WARNING_BITS,
            events_processed: self.processed,
        };
        SimOutput {
            stats,
            report,
            events: self.events,
            thresholds: self.thresholds,
        }
    }

    fn may_transmit(&self, link: usize) -> bool {
        match &self.links[link].threshold {
            Threshold::Cpcs { t_cs } => {
                let me = tx_node(link);
                let sensed: f64 = self
                    .exchanges
                    .items
                    .iter()
                    .map(|&j| self.power(tx_node(j), me))
                    .sum::<f64>()
                    + self.channel.noise;
                sensed <= *t_cs
            }
            Threshold::Ipcs { counter, .. } => counter.may_transmit(),
        }
    }

    fn on_expire(&mut self, link: usize) {
        if self.may_transmit(link) {
            self.start_exchange(link);
        } else {
            self.links[link].stats.denied += 1;
            self.log_link(tx_node(link), EventKind::Denied, link, String::new);
            self.adapt(link, SlotOutcome::Denied);
            let t = self.backoff(self.links[link].cw);
            self.schedule(self.now + t, Ev::Expire(link as u32));
        }
    }

    fn start_exchange(&mut self, link: usize) {
        self.exchanges.insert(link);
        self.ipcs_observe(link, 1.0);
        self.links[link].stats.tx_attempts += 1;
        self.start_emission(link, Frame::Data);
        self.schedule(self.now + self.data_us, Ev::DataEnd(link as u32));
    }

    /// Every other transmitter feeds the power step of `link`'s transmitter
    /// switching on (`sign = 1`) or off (`sign = -1`) into its counter.
    fn ipcs_observe(&mut self, link: usize, sign: f64) {
        let src = tx_node(link);
        for k in 0..self.links.len() {
            if k == link {
                continue;
            }
            let delta = sign * self.power(src, tx_node(k));
            if let Threshold::Ipcs { r_cs, counter, .. } = &mut self.links[k].threshold {
                *counter = ipcs_counter_update(*counter, delta, *r_cs, &self.channel);
            }
        }
    }

    /// Rebuild `link`'s IPCS counter from the active exchanges.
    fn ipcs_recount(&mut self, link: usize) {
        let me = tx_node(link);
        let powers: Vec<f64> = self
            .exchanges
            .items
            .iter()
            .filter(|&&j| j != link)
            .map(|&j| self.power(tx_node(j), me))
            .collect();
        if let Threshold::Ipcs { step, counter, .. } = &mut self.links[link].threshold {
            let active = powers.iter().filter(|&&p| p >= *step).count() as i64;
            *counter = IpcsState {
                counter: active,
                last_measured_power: powers.iter().sum(),
            };
        }
    }

    fn sinr_ok(&self, r: &Reception) -> bool {
        r.signal / (self.channel.noise + r.interference) >= self.channel.beta
    }

    fn fresh_interference(&self, observer: usize, own: usize) -> f64 {
        self.emitters
            .items
            .iter()
            .filter(|&&e| e != own)
            .map(|&e| self.power(e, observer))
            .sum()
    }

    fn start_emission(&mut self, link: usize, frame: Frame) {
        let (emitter, observer) = match frame {
            Frame::Data => (tx_node(link), rx_node(link)),
            Frame::Ack => (rx_node(link), tx_node(link)),
        };
        // the new emitter raises interference at every ongoing reception
        for idx in 0..self.receiving.items.len() {
            let j = self.receiving.items[idx];
            let mut r = self.links[j].reception.expect("receiving link has a reception");
            r.interference += self.power(emitter, r.observer);
            if r.ok && !self.sinr_ok(&r) {
                r.ok = false;
            }
            self.links[j].reception = Some(r);
        }
        self.emitters.insert(emitter);
        self.log_link(emitter, EventKind::EmitStart, link, || format!("frame={}", frame.as_str()));

        let mut r = Reception {
            observer,
            emitter,
            signal: self.power(emitter, observer),
            interference: self.fresh_interference(observer, emitter),
            ok: true,
        };
        r.ok = self.sinr_ok(&r);
        self.links[link].reception = Some(r);
        self.receiving.insert(link);
    }

    /// Stop `link`'s current emission; returns whether its frame got through.
    fn end_emission(&mut self, link: usize, frame: Frame) -> bool {
        let r = self.links[link].reception.take().expect("emission in progress");
        self.receiving.remove(link);
        self.emitters.remove(r.emitter);
        self.log_link(r.emitter, EventKind::EmitEnd, link, || format!("frame={}", frame.as_str()));
        for idx in 0..self.receiving.items.len() {
            let j = self.receiving.items[idx];
            let mut other = self.links[j].reception.expect("receiving link has a reception");
            other.interference -= self.power(r.emitter, other.observer);
            if !other.interference.is_finite() || other.interference < 0.0 {
                other.interference = self.fresh_interference(other.observer, other.emitter);
            }
            self.links[j].reception = Some(other);
        }
        let kind = if r.ok { EventKind::RxOk } else { EventKind::RxFail };
        self.log_link(r.observer, kind, link, || format!("frame={}", frame.as_str()));
        r.ok
    }

    fn on_data_end(&mut self, link: usize) {
        if self.end_emission(link, Frame::Data) {
            self.schedule(self.now + self.cfg.mac.sifs_us, Ev::AckStart(link as u32));
        } else {
            self.links[link].stats.data_failures += 1;
            let t = self.now + self.cfg.mac.sifs_us + self.ack_us;
            self.schedule(t, Ev::AckTimeout(link as u32));
        }
    }

    fn on_ack_start(&mut self, link: usize) {
        self.start_emission(link, Frame::Ack);
        self.schedule(self.now + self.ack_us, Ev::AckEnd(link as u32));
    }

    fn on_ack_end(&mut self, link: usize) {
        let ok = self.end_emission(link, Frame::Ack);
        if !ok {
            self.links[link].stats.ack_failures += 1;
        }
        self.finish_exchange(link, ok);
    }

    fn finish_exchange(&mut self, link: usize, ok: bool) {
        self.exchanges.remove(link);
        self.ipcs_observe(link, -1.0);
        let mac = self.cfg.mac;
        let st = &mut self.links[link];
        let mut dropped = false;
        if ok {
            st.stats.successes += 1;
            st.cw = mac.cw_min;
            st.retries = 0;
        } else {
            st.stats.failures += 1;
            st.retries += 1;
            if st.retries > mac.retry_limit {
                st.stats.drops += 1;
                dropped = true;
                st.cw = mac.cw_min;
                st.retries = 0;
            } else {
                st.cw = (2 * st.cw + 1).min(mac.cw_max);
            }
        }
        let kind = if ok { EventKind::Success } else { EventKind::Failure };
        self.log_link(tx_node(link), kind, link, String::new);
        if dropped {
            self.log_link(tx_node(link), EventKind::Drop, link, String::new);
        }
        let outcome = if ok {
            SlotOutcome::TransmittedAcked
        } else {
            SlotOutcome::TransmittedNoAck
        };
        self.adapt(link, outcome);
        let cw = self.links[link].cw;
        let t = self.backoff(cw);
        self.schedule(self.now + t, Ev::Expire(link as u32));
    }

    fn apply_level(&mut self, link: usize, params: &AdaptiveParams) {
        let t_cs = self.links[link].adaptive.t_cs(params);
        let channel = self.channel;
        match &mut self.links[link].threshold {
            Threshold::Cpcs { t_cs: t } => *t = t_cs,
            Threshold::Ipcs { r_cs, step, .. } => {
                *r_cs = tcs_to_rcs(t_cs, &channel).expect("adaptive threshold stays above noise");
                *step = channel.power * path_loss(*r_cs, channel.alpha);
            }
        }
        if matches!(self.links[link].threshold, Threshold::Ipcs { .. }) {
            self.ipcs_recount(link);
        }
        self.record_threshold(link);
    }

    fn adapt(&mut self, link: usize, outcome: SlotOutcome) {
        let Some(params) = self.adaptive else { return };
        let state = std::mem::take(&mut self.links[link].adaptive);
        let before = state.level;
        let (state, warn) = on_slot_outcome(state, outcome, &params);
        let changed = state.level != before;
        self.links[link].adaptive = state;
        if changed {
            self.apply_level(link, &params);
        }
        if warn {
            let w = self.links[link].adaptive.issue_warning(link as u32, &params);
            let graph = self.graph.as_ref().expect("adaptive runs build a neighbor graph");
            let deliveries = propagate(w, link as u32, graph);
            self.warnings_emitted += 1;
            self.warnings_delivered += deliveries.len() as u64;
            let count = deliveries.len();
            self.log_link(tx_node(link), EventKind::WarningEmit, link, || {
                format!("seq={} recipients={}", w.sequence, count)
            });
            if !deliveries.is_empty() {
                self.pending_warnings.push(deliveries);
                let idx = (self.pending_warnings.len() - 1) as u32;
                self.schedule(self.now + self.cfg.mac.slot_us, Ev::Warnings(idx));
            }
        }
    }

    fn on_warnings(&mut self, idx: usize) {
        let Some(params) = self.adaptive else { return };
        let deliveries = std::mem::take(&mut self.pending_warnings[idx]);
        for (node, w) in deliveries {
            let link = node as usize;
            let state = std::mem::take(&mut self.links[link].adaptive);
            let before = state.level;
            let (state, _forward) = on_warning_received(state, w, &params);
            let changed = state.level != before;
            self.links[link].adaptive = state;
            self.log_link(tx_node(link), EventKind::WarningDeliver, link, || {
                format!("source={} seq={} ttl={}", w.source, w.sequence, w.ttl)
            });
            if changed {
                self.apply_level(link, &params);
            }
        }
    }

    fn on_block(&mut self, k: usize) {
        let k_a = self.cfg.fading.blocks[k].k_a;
        self.log(0, EventKind::FadingBlock, || format!("block={k} k_a={k_a}"));
        if k_a.is_infinite() {
            self.faded.clear();
        } else {
            let m = self.n_nodes;
            let mut faded = vec![0.0; m * m];
            for (i, slot) in faded.iter_mut().enumerate() {
                if i / m != i % m {
                    *slot = self.base[i] * sample_rician_gain(k_a, &mut self.fading_rng).get();
                }
            }
            self.faded = faded;
        }
        // gains changed under every ongoing reception and counter
        for idx in 0..self.receiving.items.len() {
            let j = self.receiving.items[idx];
            let mut r = self.links[j].reception.expect("receiving link has a reception");
            r.signal = self.power(r.emitter, r.observer);
            r.interference = self.fresh_interference(r.observer, r.emitter);
            if r.ok && !self.sinr_ok(&r) {
                r.ok = false;
            }
            self.links[j].reception = Some(r);
        }
        for link in 0..self.links.len() {
            if matches!(self.links[link].threshold, Threshold::Ipcs { .. }) {
                self.ipcs_recount(link);
            }
        }
    }
}
