//! SINR physics: geometry, received power, link-set feasibility and
//! interference-level functionals.
//!
//! All quantities are in SI units (meters, watts). Received power from a
//! transmitter at distance `d` is `P · g · d^-α`, where `g` is an optional
//! small-scale fading gain (1 when absent).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in the plane. One-dimensional layouts use `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// A point on the real line.
    pub const fn on_line(x: f64) -> Self {
        Point { x, y: 0.0 }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn scaled(&self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub type LinkId = u32;

/// A transmitter/receiver pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub tx: Point,
    pub rx: Point,
}

impl Link {
    pub fn new(id: LinkId, tx: Point, rx: Point) -> Result<Self> {
        if !tx.is_finite() || !rx.is_finite() {
            return Err(Error::invalid("link", format!("link {id} has non-finite coordinates")));
        }
        if tx == rx {
            return Err(Error::CoincidentPoints { x: tx.x, y: tx.y });
        }
        Ok(Link { id, tx, rx })
    }

    pub fn length(&self) -> f64 {
        self.tx.distance(&self.rx)
    }

    /// The same link with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Link {
        Link {
            id: self.id,
            tx: self.tx.scaled(s),
            rx: self.rx.scaled(s),
        }
    }
}

/// Transmit power `P`, background noise `N`, path-loss exponent `α` and
/// SINR decoding threshold `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub power: f64,
    pub noise: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ChannelParams {
    pub fn new(power: f64, noise: f64, alpha: f64, beta: f64) -> Result<Self> {
        let params = ChannelParams {
            power,
            noise,
            alpha,
            beta,
        };
        params.validate()?;
        Ok(params)
    }

    /// Like [`ChannelParams::new`] but only requires `α > 0`. For geometric
    /// constructions (admission order, feasibility of a fixed state) that do
    /// not depend on the interference series converging.
    pub fn geometric(power: f64, noise: f64, alpha: f64, beta: f64) -> Result<Self> {
        let params = ChannelParams {
            power,
            noise,
            alpha,
            beta,
        };
        params.check(0.0)?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.check(2.0)
    }

    fn check(&self, min_alpha: f64) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::invalid("power", format!("must be positive, got {}", self.power)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise", format!("must be >= 0, got {}", self.noise)));
        }
        if !(self.alpha > min_alpha && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must exceed {min_alpha}, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    /// Received power at distance `d` with unit gain.
    #[inline]
    pub fn received(&self, d: f64) -> f64 {
        self.power * path_loss(d, self.alpha)
    }
}

/// Multiplicative small-scale power gain. Unit mean under Rician fading.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FadingGain(f64);

impl FadingGain {
    pub const UNIT: FadingGain = FadingGain(1.0);

    pub fn new(gain: f64) -> Result<Self> {
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(Error::invalid("gain", format!("must be finite and >= 0, got {gain}")));
        }
        Ok(FadingGain(gain))
    }

    pub(crate) fn from_raw(gain: f64) -> Self {
        debug_assert!(gain >= 0.0);
        FadingGain(gain)
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for FadingGain {
    fn default() -> Self {
        FadingGain::UNIT
    }
}

#[inline]
pub(crate) fn path_loss(d: f64, alpha: f64) -> f64 {
    // powi is noticeably faster for the common integer exponents
    if alpha == 4.0 {
        let d2 = d * d;
        1.0 / (d2 * d2)
    } else {
        d.powf(-alpha)
    }
}

fn nonzero_distance(a: &Point, b: &Point) -> Result<f64> {
    let d = a.distance(b);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::CoincidentPoints { x: a.x, y: a.y })
    }
}

fn gain_at(gains: Option<&[FadingGain]>, k: usize) -> f64 {
    gains.map_or(1.0, |g| g[k].get())
}

fn check_gains(gains: Option<&[FadingGain]>, len: usize) -> Result<()> {
    match gains {
        Some(g) if g.len() != len => Err(Error::invalid(
            "gains",
            format!("expected {len} gains, got {}", g.len()),
        )),
        _ => Ok(()),
    }
}

/// Minimum distance among the four endpoint pairs of two links.
///
/// This is the distance that governs interference in both directions: the
/// DATA frame at `rx` and the ACK frame at `tx`.
pub fn link_distance(i: &Link, j: &Link) -> f64 {
    let a = j.tx.distance(&i.rx);
    let b = j.rx.distance(&i.tx);
    let c = j.rx.distance(&i.rx);
    let d = j.tx.distance(&i.tx);
    a.min(b).min(c).min(d)
}

/// Locally measured interference-and-noise power at `x`:
/// `N + Σ P · g_z · |z − x|^-α` over the given transmitters.
pub fn cumulative_power_at(
    x: &Point,
    transmitters: &[Point],
    params: &ChannelParams,
    gains: Option<&[FadingGain]>,
) -> Result<f64> {
    check_gains(gains, transmitters.len())?;
    let mut total = params.noise;
    for (k, z) in transmitters.iter().enumerate() {
        let d = nonzero_distance(z, x)?;
        total += params.received(d) * gain_at(gains, k);
    }
    Ok(total)
}

/// Bi-directional SINR feasibility of a concurrent link set.
///
/// Every link must satisfy `P·g_i·|t_i − r_i|^-α / (N + Σ_j P·g_j·dist(i,j)^-α) ≥ β`,
/// where `dist` is [`link_distance`]. With `gains`, `gains[k]` scales all
/// power emitted by link `k` (its DATA and its ACK).
pub fn is_feasible_state(links: &[Link], params: &ChannelParams, gains: Option<&[FadingGain]>) -> bool {
    first_infeasible(links, params, gains).is_none()
}

/// Index of the first link (in slice order) that violates feasibility.
pub fn first_infeasible(
    links: &[Link],
    params: &ChannelParams,
    gains: Option<&[FadingGain]>,
) -> Option<usize> {
    if let Some(g) = gains {
        assert_eq!(g.len(), links.len(), "one gain per link");
    }
    (0..links.len()).find(|&i| link_sinr_in_state(i, links, params, gains) < params.beta)
}

/// SINR of `links[i]` against every other link of the state, using
/// the bi-directional distance.
pub fn link_sinr_in_state(
    i: usize,
    links: &[Link],
    params: &ChannelParams,
    gains: Option<&[FadingGain]>,
) -> f64 {
    let li = &links[i];
    let signal = params.received(li.length()) * gain_at(gains, i);
    let mut denom = params.noise;
    for (j, lj) in links.iter().enumerate() {
        if j != i {
            denom += params.received(link_distance(li, lj)) * gain_at(gains, j);
        }
    }
    signal / denom
}

/// Interference level at the transmitter of `i`: `Σ_{j ∈ s, j ≠ i} |t_j − t_i|^-α`.
///
/// Links in `s` sharing `i`'s id are skipped.
pub fn interference_level(i: &Link, s: &[Link], alpha: f64) -> Result<f64> {
    let mut total = 0.0;
    for j in s.iter().filter(|j| j.id != i.id) {
        let d = nonzero_distance(&j.tx, &i.tx)?;
        total += path_loss(d, alpha);
    }
    Ok(total)
}

/// Interference level at an arbitrary point from a set of transmitter
/// positions, `Σ |z − x|^-α`. Used for packed configurations that have no
/// receivers.
pub fn interference_level_at(x: &Point, transmitters: &[Point], alpha: f64) -> Result<f64> {
    let mut total = 0.0;
    for z in transmitters {
        total += path_loss(nonzero_distance(z, x)?, alpha);
    }
    Ok(total)
}

/// Bi-directional interference level `Σ_{j ∈ s, j ≠ i} dist(i, j)^-α`.
pub fn bidirectional_interference_level(i: &Link, s: &[Link], alpha: f64) -> Result<f64> {
    let mut total = 0.0;
    for j in s.iter().filter(|j| j.id != i.id) {
        let d = link_distance(i, j);
        if d <= 0.0 {
            return Err(Error::CoincidentPoints { x: i.tx.x, y: i.tx.y });
        }
        total += path_loss(d, alpha);
    }
    Ok(total)
}

/// SINR at `rx` for a signal from `own_tx` against concurrent transmitters.
///
/// `signal_gain` scales the wanted signal; `interferer_gains[k]` scales the
/// power of `concurrent[k]`.
pub fn sinr_at(
    rx: &Point,
    own_tx: &Point,
    concurrent: &[Point],
    params: &ChannelParams,
    signal_gain: Option<FadingGain>,
    interferer_gains: Option<&[FadingGain]>,
) -> Result<f64> {
    let d = nonzero_distance(own_tx, rx)?;
    let signal = params.received(d) * signal_gain.map_or(1.0, FadingGain::get);
    let denom = cumulative_power_at(rx, concurrent, params, interferer_gains)?;
    Ok(signal / denom)
}
