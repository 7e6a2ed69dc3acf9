//! Scenario files: flat `key = value` text with `#` comments.
//!
//! Every key has a default, so an empty file is a valid scenario. Unknown
//! or repeated keys are errors. [`Scenario::to_text`] writes every key, and
//! parsing that text gives back the same scenario.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adaptive::AdaptiveParams;
use crate::bounds::{i_bar, Dimension, DEFAULT_TOLERANCE};
use crate::carrier_sense::{static_cpcs_threshold, static_ipcs_range, CsConfig, Mechanism, LEGACY_MARGIN_DB};
use crate::channel::{ChannelParams, Link};
use crate::error::{Error, Result};
use crate::sim::{FadingBlock, FadingParams, MacParams, Sensing, SimConfig};
use crate::topology::{generate, load_topology, max_link_length, TopologyKind, TopologySpec};

/// A numeric setting that can be derived from the rest of the scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto {
    Auto,
    Value(f64),
}

impl fmt::Display for Auto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Auto {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            Ok(Auto::Auto)
        } else {
            s.parse().map(Auto::Value).map_err(|_| format!("expected `auto` or a number, got `{s}`"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Uniform,
    Clustered,
    File(PathBuf),
}

/// Which carrier-sensing rule the transmitters use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingMode {
    Cpcs,
    Ipcs,
    /// Fixed threshold a margin above noise.
    Legacy,
    AdaptiveCpcs,
    AdaptiveIpcs,
}

impl SensingMode {
    const NAMES: [(SensingMode, &'static str); 5] = [
        (SensingMode::Cpcs, "cpcs"),
        (SensingMode::Ipcs, "ipcs"),
        (SensingMode::Legacy, "legacy"),
        (SensingMode::AdaptiveCpcs, "adaptive-cpcs"),
        (SensingMode::AdaptiveIpcs, "adaptive-ipcs"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::NAMES.iter().find(|(m, _)| *m == self).map(|(_, s)| *s).expect("all modes named")
    }
}

impl FromStr for SensingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::NAMES
            .iter()
            .find(|(_, name)| *name == s)
            .map(|(m, _)| *m)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::NAMES.iter().map(|(_, n)| *n).collect();
                format!("expected one of {}, got `{s}`", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scenario_id: String,
    pub topology: TopologySource,
    pub n_links: usize,
    pub width: f64,
    pub height: f64,
    pub min_len: f64,
    pub max_len: f64,
    pub clusters: usize,
    pub cluster_spread: f64,
    pub topology_seed: u64,

    pub power: f64,
    pub noise: f64,
    pub alpha: f64,
    pub beta_db: f64,

    pub sensing: SensingMode,
    /// Static CPCS threshold and initial adaptive threshold `t*` (watts).
    pub t_cs: Auto,
    pub r_cs: Auto,
    pub legacy_margin_db: f64,
    /// Bound used for derived thresholds; `auto` is `Ī_d[α]`.
    pub i_bound: Auto,
    pub dimension: Dimension,
    /// Longest link the derived thresholds protect; `auto` is the
    /// topology's longest link.
    pub d_max: Auto,

    /// `δ_s / t*`.
    pub delta_s_ratio: f64,
    /// `t_max / t*`.
    pub t_max_ratio: f64,
    pub m_ack: u32,
    pub n_slot: u32,
    pub h_w: u32,
    pub neighbor_range: Auto,

    pub mac: MacParams,
    pub fading: FadingParams,
    pub duration_s: f64,
    pub seed: u64,
    pub record_events: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            scenario_id: "scenario".into(),
            topology: TopologySource::Uniform,
            n_links: 100,
            width: 3000.0,
            height: 3000.0,
            min_len: 10.0,
            max_len: 250.0,
            clusters: TopologyKind::DEFAULT_CLUSTERS,
            cluster_spread: TopologyKind::DEFAULT_SPREAD,
            topology_seed: 1,
            power: 1.0,
            noise: 1e-13,
            alpha: 4.0,
            beta_db: 20.0,
            sensing: SensingMode::Cpcs,
            t_cs: Auto::Auto,
            r_cs: Auto::Auto,
            legacy_margin_db: LEGACY_MARGIN_DB,
            i_bound: Auto::Auto,
            dimension: Dimension::Two,
            d_max: Auto::Auto,
            delta_s_ratio: 20.0,
            t_max_ratio: 1e4,
            m_ack: 2,
            n_slot: 3,
            h_w: 1,
            neighbor_range: Auto::Auto,
            mac: MacParams::default(),
            fading: FadingParams::none(),
            duration_s: 1.0,
            seed: 1,
            record_events: false,
        }
    }
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

/// `inf`, a single `k_a`, or comma-separated `start_us:k_a` blocks.
fn parse_fading(v: &str) -> std::result::Result<FadingParams, String> {
    if !v.contains(':') {
        return Ok(FadingParams::constant(parse(v)?));
    }
    let blocks = v
        .split(',')
        .map(|b| {
            let (start, k) = b.trim().split_once(':').ok_or_else(|| format!("expected start_us:k_a, got `{b}`"))?;
            Ok(FadingBlock {
                start_us: parse(start.trim())?,
                k_a: parse(k.trim())?,
            })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    FadingParams::blocks(blocks).map_err(|e| e.to_string())
}

fn format_fading(f: &FadingParams) -> String {
    match f.blocks.as_slice() {
        [b] if b.start_us == 0.0 => format!("{}", b.k_a),
        blocks => blocks
            .iter()
            .map(|b| format!("{}:{}", b.start_us, b.k_a))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

impl Scenario {
    /// Every key, in the order [`Scenario::to_text`] writes them. The MAC
    /// SIR requirement always follows `beta_db`.
    pub const KEYS: [&'static str; 40] = [
        "scenario_id",
        "topology",
        "n_links",
        "width",
        "height",
        "min_len",
        "max_len",
        "clusters",
        "cluster_spread",
        "topology_seed",
        "power",
        "noise",
        "alpha",
        "beta_db",
        "sensing",
        "t_cs",
        "r_cs",
        "legacy_margin_db",
        "i_bound",
        "dimension",
        "d_max",
        "delta_s_ratio",
        "t_max_ratio",
        "m_ack",
        "n_slot",
        "h_w",
        "neighbor_range",
        "slot_us",
        "sifs_us",
        "difs_us",
        "data_rate_bps",
        "payload_bytes",
        "ack_bytes",
        "cw_min",
        "cw_max",
        "retry_limit",
        "fading",
        "duration_s",
        "seed",
        "record_events",
    ];

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "scenario_id" => {
                if v.is_empty() || v.contains(char::is_whitespace) {
                    return Err(format!("scenario_id must be one non-empty word, got `{v}`"));
                }
                self.scenario_id = v.to_owned();
            }
            "topology" => {
                self.topology = match v {
                    "uniform" => TopologySource::Uniform,
                    "clustered" => TopologySource::Clustered,
                    _ => match v.strip_prefix("file:") {
                        Some(path) if !path.is_empty() => TopologySource::File(PathBuf::from(path)),
                        _ => return Err(format!("expected uniform, clustered or file:<path>, got `{v}`")),
                    },
                }
            }
            "n_links" => self.n_links = parse(v)?,
            "width" => self.width = parse(v)?,
            "height" => self.height = parse(v)?,
            "min_len" => self.min_len = parse(v)?,
            "max_len" => self.max_len = parse(v)?,
            "clusters" => self.clusters = parse(v)?,
            "cluster_spread" => self.cluster_spread = parse(v)?,
            "topology_seed" => self.topology_seed = parse(v)?,
            "power" => self.power = parse(v)?,
            "noise" => self.noise = parse(v)?,
            "alpha" => self.alpha = parse(v)?,
            "beta_db" => self.beta_db = parse(v)?,
            "sensing" => self.sensing = v.parse()?,
            "t_cs" => self.t_cs = v.parse()?,
            "r_cs" => self.r_cs = v.parse()?,
            "legacy_margin_db" => self.legacy_margin_db = parse(v)?,
            "i_bound" => self.i_bound = v.parse()?,
            "dimension" => {
                self.dimension = Dimension::from_int(parse(v)?).map_err(|e| e.to_string())?;
            }
            "d_max" => self.d_max = v.parse()?,
            "delta_s_ratio" => self.delta_s_ratio = parse(v)?,
            "t_max_ratio" => self.t_max_ratio = parse(v)?,
            "m_ack" => self.m_ack = parse(v)?,
            "n_slot" => self.n_slot = parse(v)?,
            "h_w" => self.h_w = parse(v)?,
            "neighbor_range" => self.neighbor_range = v.parse()?,
            "slot_us" => self.mac.slot_us = parse(v)?,
            "sifs_us" => self.mac.sifs_us = parse(v)?,
            "difs_us" => self.mac.difs_us = parse(v)?,
            "data_rate_bps" => self.mac.data_rate_bps = parse(v)?,
            "payload_bytes" => self.mac.payload_bytes = parse(v)?,
            "ack_bytes" => self.mac.ack_bytes = parse(v)?,
            "cw_min" => self.mac.cw_min = parse(v)?,
            "cw_max" => self.mac.cw_max = parse(v)?,
            "retry_limit" => self.mac.retry_limit = parse(v)?,
            "fading" => self.fading = parse_fading(v)?,
            "duration_s" => self.duration_s = parse(v)?,
            "seed" => self.seed = parse(v)?,
            "record_events" => self.record_events = parse_bool(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let topology = match &self.topology {
            TopologySource::Uniform => "uniform".to_owned(),
            TopologySource::Clustered => "clustered".to_owned(),
            TopologySource::File(p) => format!("file:{}", p.display()),
        };
        let m = &self.mac;
        vec![
            ("scenario_id", self.scenario_id.clone()),
            ("topology", topology),
            ("n_links", self.n_links.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("min_len", self.min_len.to_string()),
            ("max_len", self.max_len.to_string()),
            ("clusters", self.clusters.to_string()),
            ("cluster_spread", self.cluster_spread.to_string()),
            ("topology_seed", self.topology_seed.to_string()),
            ("power", self.power.to_string()),
            ("noise", self.noise.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta_db", self.beta_db.to_string()),
            ("sensing", self.sensing.as_str().to_owned()),
            ("t_cs", self.t_cs.to_string()),
            ("r_cs", self.r_cs.to_string()),
            ("legacy_margin_db", self.legacy_margin_db.to_string()),
            ("i_bound", self.i_bound.to_string()),
            ("dimension", self.dimension.as_int().to_string()),
            ("d_max", self.d_max.to_string()),
            ("delta_s_ratio", self.delta_s_ratio.to_string()),
            ("t_max_ratio", self.t_max_ratio.to_string()),
            ("m_ack", self.m_ack.to_string()),
            ("n_slot", self.n_slot.to_string()),
            ("h_w", self.h_w.to_string()),
            ("neighbor_range", self.neighbor_range.to_string()),
            ("slot_us", m.slot_us.to_string()),
            ("sifs_us", m.sifs_us.to_string()),
            ("difs_us", m.difs_us.to_string()),
            ("data_rate_bps", m.data_rate_bps.to_string()),
            ("payload_bytes", m.payload_bytes.to_string()),
            ("ack_bytes", m.ack_bytes.to_string()),
            ("cw_min", m.cw_min.to_string()),
            ("cw_max", m.cw_max.to_string()),
            ("retry_limit", m.retry_limit.to_string()),
            ("fading", format_fading(&self.fading)),
            ("duration_s", self.duration_s.to_string()),
            ("seed", self.seed.to_string()),
            ("record_events", self.record_events.to_string()),
        ]
    }

    /// Parse scenario text. Errors carry the 1-based line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Scenario::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            s.set(key, value.trim()).map_err(|m| err(format!("{key}: {m}")))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Scenario::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key, one per line.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.power, self.noise, self.alpha, 10f64.powf(self.beta_db / 10.0))
    }

    pub fn topology_spec(&self) -> TopologySpec {
        let kind = match self.topology {
            TopologySource::Clustered => TopologyKind::Clustered {
                clusters: self.clusters,
                spread: self.cluster_spread,
            },
            _ => TopologyKind::Uniform,
        };
        TopologySpec {
            kind,
            n_links: self.n_links,
            width: self.width,
            height: self.height,
            min_len: self.min_len,
            max_len: self.max_len,
            seed: self.topology_seed,
        }
    }

    /// Generate or load the links. Relative file paths resolve against
    /// `base` when given.
    pub fn build_topology(&self, base: Option<&Path>) -> Result<Vec<Link>> {
        match &self.topology {
            TopologySource::File(p) => {
                let path = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                load_topology(&path)
            }
            _ => generate(&self.topology_spec()),
        }
    }

    /// Interference bound for derived thresholds.
    pub fn i_bound(&self) -> Result<f64> {
        match self.i_bound {
            Auto::Value(v) => Ok(v),
            Auto::Auto => Ok(i_bar(self.dimension, self.alpha, DEFAULT_TOLERANCE)?.upper()),
        }
    }

    /// The static-safe threshold `t*` for `links`.
    pub fn t_star(&self, links: &[Link]) -> Result<f64> {
        let ch = self.channel()?;
        match self.t_cs {
            Auto::Value(v) => Ok(v),
            Auto::Auto => static_cpcs_threshold(self.d_max_for(links), &ch, self.i_bound()?),
        }
    }

    fn d_max_for(&self, links: &[Link]) -> f64 {
        match self.d_max {
            Auto::Value(v) => v,
            Auto::Auto => max_link_length(links),
        }
    }

    /// Resolve the scenario into simulator settings for `links`.
    pub fn sim_config(&self, links: &[Link]) -> Result<SimConfig> {
        let ch = self.channel().map_err(|e| Error::Config(e.to_string()))?;
        let config = |e: Error| Error::Config(e.to_string());
        let sensing = match self.sensing {
            SensingMode::Cpcs => Sensing::Static(CsConfig::cpcs(self.t_star(links).map_err(config)?, &ch).map_err(config)?),
            SensingMode::Ipcs => {
                let r = match self.r_cs {
                    Auto::Value(v) => v,
                    Auto::Auto => static_ipcs_range(self.d_max_for(links), &ch, self.i_bound().map_err(config)?)
                        .map_err(config)?,
                };
                Sensing::Static(CsConfig::ipcs(r).map_err(config)?)
            }
            SensingMode::Legacy => Sensing::Static(CsConfig::legacy(&ch, self.legacy_margin_db).map_err(config)?),
            SensingMode::AdaptiveCpcs | SensingMode::AdaptiveIpcs => {
                let t = self.t_star(links).map_err(config)?;
                let params = AdaptiveParams::new(
                    self.delta_s_ratio * t,
                    t,
                    self.t_max_ratio * t,
                    self.m_ack,
                    self.n_slot,
                    self.h_w,
                )
                .map_err(config)?;
                let mechanism = if self.sensing == SensingMode::AdaptiveCpcs {
                    Mechanism::Cpcs
                } else {
                    Mechanism::Ipcs
                };
                Sensing::Adaptive { mechanism, params }
            }
        };
        let cfg = SimConfig {
            channel: ch,
            mac: MacParams {
                sir_requirement_db: self.beta_db,
                ..self.mac
            },
            sensing,
            fading: self.fading.clone(),
            duration_s: self.duration_s,
            seed: self.seed,
            neighbor_range: match self.neighbor_range {
                Auto::Auto => None,
                Auto::Value(v) => Some(v),
            },
            record_events: self.record_events,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(Scenario::parse("").unwrap(), Scenario::default());
        assert_eq!(Scenario::parse("# only a comment\n\n").unwrap(), Scenario::default());
    }

    #[test]
    fn defaults_round_trip() {
        let s = Scenario::default();
        assert_eq!(Scenario::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn written_keys_match_the_key_list() {
        let written: Vec<&str> = Scenario::default().entries().iter().map(|(k, _)| *k).collect();
        assert_eq!(written, Scenario::KEYS);
    }

    #[test]
    fn parses_values_and_comments() {
        let s = Scenario::parse(
            "sensing = adaptive-ipcs  # trailing comment\n\
             t_cs = 2e-13\n\
             fading = 0:0.1, 5000:inf\n\
             topology = file:links.csv\n\
             dimension = 1\n\
             record_events = true\n",
        )
        .unwrap();
        assert_eq!(s.sensing, SensingMode::AdaptiveIpcs);
        assert_eq!(s.t_cs, Auto::Value(2e-13));
        assert_eq!(s.fading.blocks.len(), 2);
        assert!(s.fading.blocks[1].k_a.is_infinite());
        assert_eq!(s.topology, TopologySource::File("links.csv".into()));
        assert_eq!(s.dimension, Dimension::One);
        assert!(s.record_events);
        assert_eq!(Scenario::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn errors_name_the_line() {
        let e = Scenario::parse("alpha = 4\nalpah = 3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(e.to_string().contains("unknown key `alpah`"));
        assert!(matches!(Scenario::parse("alpha = 4\nalpha = 5").unwrap_err(), Error::Parse { line: 2, .. }));
        assert!(matches!(Scenario::parse("no equals sign").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(Scenario::parse("n_links = many").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(Scenario::parse("sensing = csma").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(Scenario::parse("fading = 5:1").unwrap_err(), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn derived_thresholds() {
        let s = Scenario::default();
        let links = s.build_topology(None).unwrap();
        let cfg = s.sim_config(&links).unwrap();
        let Sensing::Static(CsConfig::Cpcs { t_cs }) = cfg.sensing else { panic!() };
        let expect = static_cpcs_threshold(max_link_length(&links), &s.channel().unwrap(), s.i_bound().unwrap()).unwrap();
        assert_eq!(t_cs, expect);

        let a = Scenario {
            sensing: SensingMode::AdaptiveCpcs,
            ..Scenario::default()
        };
        let Sensing::Adaptive { params, .. } = a.sim_config(&links).unwrap().sensing else { panic!() };
        assert_eq!(params, AdaptiveParams::with_defaults(expect).unwrap());
    }

    #[test]
    fn beta_mismatch_cannot_arise_from_text() {
        let s = Scenario::parse("beta_db = 10").unwrap();
        let links = s.build_topology(None).unwrap();
        assert_eq!(s.sim_config(&links).unwrap().mac.sir_requirement_db, 10.0);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![1e-20f64..1e-5, 0.5f64..1e4]
    }

    proptest! {
        #[test]
        fn arbitrary_scenarios_round_trip(
            n in 1usize..1000,
            noise in finite(),
            alpha in 2.1f64..6.0,
            t in prop::option::of(finite()),
            mode in 0usize..5,
            k in prop::option::of(0.0f64..100.0),
            seed in any::<u64>(),
            events in any::<bool>(),
        ) {
            let s = Scenario {
                n_links: n,
                noise,
                alpha,
                t_cs: t.map_or(Auto::Auto, Auto::Value),
                sensing: SensingMode::NAMES[mode].0,
                fading: k.map_or(FadingParams::none(), FadingParams::constant),
                seed,
                record_events: events,
                ..Scenario::default()
            };
            prop_assert_eq!(Scenario::parse(&s.to_text()).unwrap(), s);
        }
    }
}
