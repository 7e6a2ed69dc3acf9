//! Event-driven simulation of saturated CSMA/CA links under the SINR model.
//!
//! Every link always has a packet queued. A transmitter waits `DIFS` plus a
//! random backoff, then senses the channel once. If sensing allows it, it
//! sends DATA; the receiver replies with an ACK after `SIFS` if the DATA
//! frame kept its SINR at or above `β` for its whole airtime. If sensing
//! blocks it, the attempt counts as *denied* and a fresh backoff is drawn
//! from the same contention window.
//!
//! Carrier sensing treats a link's whole DATA–SIFS–ACK exchange as power
//! radiated from its transmitter. This is the reservation the static
//! interference-safe thresholds are derived for; physical reception still
//! uses the real emitter of each frame.
//!
//! Time is kept in microseconds. The backoff carries a continuous component
//! below one slot, so no two transmitters ever start at the same instant.

mod engine;
pub mod fading;
pub mod log;

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::AdaptiveParams;
use crate::carrier_sense::{CsConfig, Mechanism};
use crate::channel::{path_loss, ChannelParams, Link, LinkId, Point};
use crate::error::{Error, Result};
use crate::metrics::LinkOutcome;

pub use fading::{rician_pdf, sample_rician_gain, FadingBlock, FadingParams};
pub use log::{EventKind, Frame, LogEvent};

/// Airtime in seconds of `bytes` at `rate_bps`.
pub fn frame_airtime(bytes: u32, rate_bps: f64) -> f64 {
    8.0 * bytes as f64 / rate_bps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    pub slot_us: f64,
    pub sifs_us: f64,
    pub difs_us: f64,
    pub data_rate_bps: f64,
    pub payload_bytes: u32,
    pub ack_bytes: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Retransmissions allowed before a packet is dropped.
    pub retry_limit: u32,
    /// Required SINR in dB; must agree with the channel's `β`.
    pub sir_requirement_db: f64,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot_us: 20.0,
            sifs_us: 10.0,
            difs_us: 50.0,
            data_rate_bps: 11e6,
            payload_bytes: 1460,
            ack_bytes: 14,
            cw_min: 31,
            cw_max: 1023,
            retry_limit: 7,
            sir_requirement_db: 20.0,
        }
    }
}

impl MacParams {
    pub fn validate(&self, channel: &ChannelParams) -> Result<()> {
        for (name, v) in [
            ("slot", self.slot_us),
            ("sifs", self.sifs_us),
            ("difs", self.difs_us),
            ("data_rate", self.data_rate_bps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.payload_bytes == 0 || self.ack_bytes == 0 {
            return Err(Error::Config("payload and ACK sizes must be positive".into()));
        }
        if self.cw_min == 0 || self.cw_max < self.cw_min {
            return Err(Error::Config(format!(
                "need 0 < cw_min <= cw_max, got {} and {}",
                self.cw_min, self.cw_max
            )));
        }
        let beta = self.beta();
        if (beta / channel.beta - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "SIR requirement {} dB (beta = {beta}) does not match channel beta {}",
                self.sir_requirement_db, channel.beta
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        10f64.powf(self.sir_requirement_db / 10.0)
    }

    pub fn data_airtime_us(&self) -> f64 {
        frame_airtime(self.payload_bytes, self.data_rate_bps) * 1e6
    }

    pub fn ack_airtime_us(&self) -> f64 {
        frame_airtime(self.ack_bytes, self.data_rate_bps) * 1e6
    }

    /// DATA, SIFS and ACK: the time a link holds its reservation.
    pub fn exchange_us(&self) -> f64 {
        self.data_airtime_us() + self.sifs_us + self.ack_airtime_us()
    }

    pub fn payload_bits(&self) -> f64 {
        8.0 * self.payload_bytes as f64
    }

    /// Goodput of a lone saturated link: one payload per
    /// `DIFS + E[backoff] + exchange`, where the mean backoff is
    /// `(CW_min/2 + 1/2)` slots including the sub-slot jitter.
    pub fn single_link_goodput(&self) -> f64 {
        let backoff = (self.cw_min as f64 / 2.0 + 0.5) * self.slot_us;
        self.payload_bits() / ((self.difs_us + backoff + self.exchange_us()) * 1e-6)
    }
}

/// How transmitters decide whether they may start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sensing {
    /// One threshold (or range) shared by every node.
    Static(CsConfig),
    /// Per-node thresholds driven by denial streaks and hidden-node
    /// warnings. For IPCS the threshold is mapped to a range on demand.
    Adaptive { mechanism: Mechanism, params: AdaptiveParams },
}

impl Sensing {
    pub fn mechanism(&self) -> Mechanism {
        match self {
            Sensing::Static(cs) => cs.mechanism(),
            Sensing::Adaptive { mechanism, .. } => *mechanism,
        }
    }

    pub fn label(&self) -> &'static str {
        match (self, self.mechanism()) {
            (Sensing::Static(_), Mechanism::Cpcs) => "static-cpcs",
            (Sensing::Static(_), Mechanism::Ipcs) => "static-ipcs",
            (Sensing::Adaptive { .. }, Mechanism::Cpcs) => "adaptive-cpcs",
            (Sensing::Adaptive { .. }, Mechanism::Ipcs) => "adaptive-ipcs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub channel: ChannelParams,
    pub mac: MacParams,
    pub sensing: Sensing,
    pub fading: FadingParams,
    pub duration_s: f64,
    pub seed: u64,
    /// Warning neighbor range; defaults to the decodable range
    /// `max_tx_distance` (unbounded when `N = 0`).
    pub neighbor_range: Option<f64>,
    /// Keep a full event log in the output.
    pub record_events: bool,
}

impl SimConfig {
    /// Defaults: standard DCF timing, no fading, one simulated second.
    pub fn new(channel: ChannelParams, sensing: Sensing) -> Self {
        SimConfig {
            channel,
            mac: MacParams {
                sir_requirement_db: 10.0 * channel.beta.log10(),
                ..MacParams::default()
            },
            sensing,
            fading: FadingParams::none(),
            duration_s: 1.0,
            seed: 0,
            neighbor_range: None,
            record_events: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.mac.validate(&self.channel)?;
        self.fading.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration_s)));
        }
        match self.sensing {
            Sensing::Static(CsConfig::Cpcs { t_cs }) if !(t_cs > self.channel.noise) => {
                return Err(Error::Config(format!("t_cs {t_cs} must exceed the noise level")));
            }
            Sensing::Static(CsConfig::Ipcs { r_cs }) if !(r_cs > 0.0) => {
                return Err(Error::Config(format!("r_cs must be positive, got {r_cs}")));
            }
            Sensing::Adaptive { params, mechanism } => {
                params.validate().map_err(|e| Error::Config(e.to_string()))?;
                if mechanism == Mechanism::Ipcs && !(params.t_cs_init > self.channel.noise) {
                    return Err(Error::Config("adaptive IPCS needs t_cs_init above the noise level".into()));
                }
            }
            _ => {}
        }
        if let Some(r) = self.neighbor_range {
            if !(r >= 0.0) {
                return Err(Error::Config(format!("neighbor range must be >= 0, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub link_id: LinkId,
    pub goodput_bps: f64,
    /// DATA frames sent.
    pub tx_attempts: u64,
    pub successes: u64,
    /// Transmissions that got no ACK (DATA or ACK lost).
    pub failures: u64,
    pub data_failures: u64,
    pub ack_failures: u64,
    pub drops: u64,
    /// Backoff expiries blocked by carrier sensing.
    pub denied: u64,
    pub failure_rate: f64,
    /// `(time_us, t_cs)` at start and after each change.
    pub threshold_trace: Vec<(f64, f64)>,
}

impl LinkOutcome for LinkStats {
    fn goodput(&self) -> f64 {
        self.goodput_bps
    }
    fn successes(&self) -> u64 {
        self.successes
    }
    fn failures(&self) -> u64 {
        self.failures
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub duration_s: f64,
    pub aggregate_goodput_bps: f64,
    pub failure_rate: f64,
    pub successes: u64,
    pub failures: u64,
    pub data_failures: u64,
    pub ack_failures: u64,
    pub denied: u64,
    pub warnings_emitted: u64,
    pub warnings_delivered: u64,
    /// `warnings_delivered × 200` bits.
    pub overhead_bits: u64,
    pub events_processed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSample {
    pub time_us: f64,
    pub node_id: u32,
    pub t_cs_watts: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub stats: Vec<LinkStats>,
    pub report: SimReport,
    /// Populated when `record_events` is set.
    pub events: Vec<LogEvent>,
    /// Every threshold change, node ids being link indices.
    pub thresholds: Vec<ThresholdSample>,
}

impl SimOutput {
    pub fn goodputs(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.goodput_bps).collect()
    }

    /// Time of the last threshold change at or after `from_us`, if any.
    pub fn last_threshold_change(&self, from_us: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .filter(|s| s.time_us >= from_us && s.time_us > 0.0)
            .map(|s| s.time_us)
            .last()
    }
}

/// Run one simulation.
pub fn run(links: &[Link], cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    if links.is_empty() {
        return Err(Error::Config("topology has no links".into()));
    }
    engine::Engine::new(links, cfg)?.run()
}

/// Independent, reproducible seed for instance `index` of a batch.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}

/// A transmitter switching on or off, as seen by another node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerEvent {
    Start(Point),
    Stop(Point),
}

/// Signed power change at `observer` caused by `event`: `±P·g·d^-α`.
pub fn measure_incremental_power(observer: &Point, event: PowerEvent, params: &ChannelParams, gain: f64) -> f64 {
    let (source, sign) = match event {
        PowerEvent::Start(p) => (p, 1.0),
        PowerEvent::Stop(p) => (p, -1.0),
    };
    sign * params.power * gain * path_loss(observer.distance(&source), params.alpha)
}

pub fn write_link_stats<W: Write>(stats: &[LinkStats], writer: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        link_id: LinkId,
        goodput_bps: f64,
        attempts: u64,
        successes: u64,
        failures: u64,
        failure_rate: f64,
    }
    let mut w = csv::Writer::from_writer(writer);
    for s in stats {
        w.serialize(Row {
            link_id: s.link_id,
            goodput_bps: s.goodput_bps,
            attempts: s.tx_attempts,
            successes: s.successes,
            failures: s.failures,
            failure_rate: s.failure_rate,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_thresholds<W: Write>(samples: &[ThresholdSample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
