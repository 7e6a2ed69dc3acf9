//! Admission rules for cumulative-power (CPCS) and incremental-power (IPCS)
//! carrier sensing, and the static interference-safe parameter formulas.
//!
//! CPCS admits a transmitter when the power it measures from transmitters
//! that are *already* active, plus noise, is at most `t_cs`. Because the
//! measurement happens once, at the start of a transmission, admission is a
//! property of a *sequence*, not a set: see [`cpcs_sequence_admits`] versus
//! [`cpcs_simple_admits`].
//!
//! IPCS admits a set when all transmitter pairs are at least `r_cs` apart.
//! A node realizes this by counting power jumps of at least `P · r_cs^-α`
//! ([`ipcs_counter_update`]).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::channel::{path_loss, ChannelParams, Link, LinkId};
use crate::error::{Error, Result};

/// Default margin of the conventional energy-detection threshold above noise.
pub const LEGACY_MARGIN_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    Cpcs,
    Ipcs,
}

/// Carrier-sensing configuration: a power threshold for CPCS or a
/// transmitter separation for IPCS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CsConfig {
    Cpcs { t_cs: f64 },
    Ipcs { r_cs: f64 },
}

impl CsConfig {
    pub fn cpcs(t_cs: f64, params: &ChannelParams) -> Result<Self> {
        if !(t_cs > params.noise && t_cs.is_finite()) {
            return Err(Error::invalid(
                "t_cs",
                format!("must exceed the noise level {} (got {t_cs})", params.noise),
            ));
        }
        Ok(CsConfig::Cpcs { t_cs })
    }

    pub fn ipcs(r_cs: f64) -> Result<Self> {
        if !(r_cs > 0.0 && r_cs.is_finite()) {
            return Err(Error::invalid("r_cs", format!("must be positive, got {r_cs}")));
        }
        Ok(CsConfig::Ipcs { r_cs })
    }

    /// Conventional CSMA: `t_cs = c + N` with `c` set `margin_db` above `N`.
    pub fn legacy(params: &ChannelParams, margin_db: f64) -> Result<Self> {
        if params.noise <= 0.0 {
            return Err(Error::invalid("noise", "legacy threshold is defined relative to N > 0"));
        }
        let c = params.noise * 10f64.powf(margin_db / 10.0);
        CsConfig::cpcs(c + params.noise, params)
    }

    pub fn mechanism(&self) -> Mechanism {
        match self {
            CsConfig::Cpcs { .. } => Mechanism::Cpcs,
            CsConfig::Ipcs { .. } => Mechanism::Ipcs,
        }
    }
}

/// Per-transmitter IPCS state. Transmission is permitted iff `counter == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IpcsState {
    pub counter: i64,
    pub last_measured_power: f64,
}

impl IpcsState {
    pub fn may_transmit(&self) -> bool {
        self.counter == 0
    }
}

/// Ordered admission sequence of distinct link ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionSequence(Vec<LinkId>);

impl AdmissionSequence {
    pub fn new(ids: Vec<LinkId>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateLink(id));
            }
        }
        Ok(AdmissionSequence(ids))
    }

    pub fn ids(&self) -> &[LinkId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Resolve ids against a topology, preserving sequence order.
    pub fn resolve(&self, topology: &[Link]) -> Result<Vec<Link>> {
        self.0
            .iter()
            .map(|id| {
                topology
                    .iter()
                    .find(|l| l.id == *id)
                    .copied()
                    .ok_or_else(|| Error::invalid("sequence", format!("unknown link id {id}")))
            })
            .collect()
    }
}

/// Power at `links[k].tx` from the transmitters of `links[..k]`, plus noise.
fn prefix_power(links: &[Link], k: usize, params: &ChannelParams) -> f64 {
    let tk = links[k].tx;
    links[..k]
        .iter()
        .map(|l| params.power * path_loss(l.tx.distance(&tk), params.alpha))
        .sum::<f64>()
        + params.noise
}

/// Simple (order-free) CPCS: every member sees at most `t_cs` from all
/// other members.
pub fn cpcs_simple_admits(links: &[Link], t_cs: f64, params: &ChannelParams) -> bool {
    links.iter().enumerate().all(|(i, li)| {
        let power: f64 = links
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, lj)| params.power * path_loss(lj.tx.distance(&li.tx), params.alpha))
            .sum();
        params.noise + power <= t_cs
    })
}

/// Sequence CPCS: each link, in order, sees at most `t_cs` from the links
/// admitted before it.
pub fn cpcs_sequence_admits(ordered: &[Link], t_cs: f64, params: &ChannelParams) -> Result<bool> {
    Ok(cpcs_first_rejected(ordered, t_cs, params)?.is_none())
}

/// Position of the first link the sequence rule rejects, if any.
pub fn cpcs_first_rejected(ordered: &[Link], t_cs: f64, params: &ChannelParams) -> Result<Option<usize>> {
    let mut seen = HashSet::with_capacity(ordered.len());
    for l in ordered {
        if !seen.insert(l.id) {
            return Err(Error::DuplicateLink(l.id));
        }
    }
    Ok((0..ordered.len()).find(|&k| prefix_power(ordered, k, params) > t_cs))
}

/// IPCS set admission: all transmitter pairs at least `r_cs` apart.
pub fn ipcs_admits(links: &[Link], r_cs: f64) -> bool {
    links.iter().enumerate().all(|(i, a)| {
        links[i + 1..].iter().all(|b| a.tx.distance(&b.tx) >= r_cs)
    })
}

/// Counter transition for an observed power change `delta_p`.
pub fn ipcs_counter_update(state: IpcsState, delta_p: f64, r_cs: f64, params: &ChannelParams) -> IpcsState {
    let step = params.power * path_loss(r_cs, params.alpha);
    let counter = if delta_p >= step {
        state.counter + 1
    } else if delta_p <= -step {
        state.counter - 1
    } else {
        state.counter
    };
    IpcsState {
        counter,
        last_measured_power: state.last_measured_power + delta_p,
    }
}

/// Interference budget `d_max^-α / β − N / P`; negative when a link of
/// length `d_max` cannot meet `β` even without interferers.
fn interference_budget(d_max: f64, params: &ChannelParams) -> Result<f64> {
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(Error::invalid("d_max", format!("must be positive, got {d_max}")));
    }
    let budget = path_loss(d_max, params.alpha) / params.beta - params.noise / params.power;
    if budget < 0.0 {
        return Err(Error::InfeasibleLinkLength { d_max });
    }
    Ok(budget)
}

fn check_bound(i_bound: f64) -> Result<()> {
    if !(i_bound > 0.0 && i_bound.is_finite()) {
        return Err(Error::invalid("i_bound", format!("must be positive, got {i_bound}")));
    }
    Ok(())
}

/// Largest CPCS threshold certified interference-safe for links no longer
/// than `d_max`, given an upper bound on the normalized maximal
/// interference level:
///
/// `t_cs = P · (2·d_max + (budget / I)^(-1/α))^-α + N`.
pub fn static_cpcs_threshold(d_max: f64, params: &ChannelParams, i_bound: f64) -> Result<f64> {
    check_bound(i_bound)?;
    let budget = interference_budget(d_max, params)?;
    let alpha = params.alpha;
    let sep = 2.0 * d_max + (budget / i_bound).powf(-1.0 / alpha);
    Ok(params.power * path_loss(sep, alpha) + params.noise)
}

/// Smallest IPCS separation certified interference-safe:
///
/// `r_cs = ((P·d_max^-α/β − N) / (P·I))^(-1/α) + 2·d_max`.
pub fn static_ipcs_range(d_max: f64, params: &ChannelParams, i_bound: f64) -> Result<f64> {
    check_bound(i_bound)?;
    // same expression as the CPCS separation, so that mapping this range
    // back through `rcs_to_tcs` reproduces the CPCS threshold bit for bit
    let budget = interference_budget(d_max, params)?;
    Ok(2.0 * d_max + (budget / i_bound).powf(-1.0 / params.alpha))
}

/// Separation at which a single transmitter contributes `t_cs − N`.
pub fn tcs_to_rcs(t_cs: f64, params: &ChannelParams) -> Result<f64> {
    if !(t_cs > params.noise) {
        return Err(Error::invalid(
            "t_cs",
            format!("must exceed the noise level {} (got {t_cs})", params.noise),
        ));
    }
    Ok(((t_cs - params.noise) / params.power).powf(-1.0 / params.alpha))
}

/// Inverse of [`tcs_to_rcs`]: `t_cs = P · r_cs^-α + N`.
pub fn rcs_to_tcs(r_cs: f64, params: &ChannelParams) -> Result<f64> {
    if !(r_cs > 0.0) {
        return Err(Error::invalid("r_cs", format!("must be positive, got {r_cs}")));
    }
    Ok(params.power * path_loss(r_cs, params.alpha) + params.noise)
}

/// Longest link that can meet `β` against noise alone, `(P / (β N))^(1/α)`.
pub fn max_tx_distance(params: &ChannelParams) -> Result<f64> {
    if params.noise <= 0.0 {
        return Err(Error::invalid("noise", "max transmission distance needs N > 0"));
    }
    Ok((params.power / (params.beta * params.noise)).powf(1.0 / params.alpha))
}
