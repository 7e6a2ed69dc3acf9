//! Numerics for the normalized maximal interference level.
//!
//! In one dimension the extremal CPCS configuration is the *closest
//! packing*: starting from `t_0` at the origin, each new transmitter is
//! placed as close as possible (alternating right and left) such that the
//! power it measures from all earlier transmitters equals the threshold
//! (`P = 1`, `N = 0`, `t_cs = 1`). Right-hand gaps are `d_1, d_2, …` and
//! left-hand gaps `c_1, c_2, …`, with `d_1 < c_1 < d_2 < c_2 < …`.
//!
//! The gaps have no closed form, but each is bounded below by
//! `d_k > (Σ_{i=1}^{2k-1} i^-α)^(1/α)` and `c_k > (Σ_{i=1}^{2k} i^-α)^(1/α)`.
//! Substituting the lower bounds gives computable upper-bound series:
//!
//! ```text
//! Ī₁[α] = Σ_n (Σ_{k≤n} c_lb(k))^-α + Σ_n (Σ_{k≤n} d_lb(k))^-α
//! Ī₂[α] = 6 Σ_n (Σ_{k≤n} d_lb(k))^(1-α)
//! ```
//!
//! The second places hexagonal rings at the 1-D radii; each ring of radius
//! `ρ` holds `6ρ` nodes.

use serde::{Deserialize, Serialize};

use crate::channel::Point;
use crate::error::{Error, Result};

/// Default truncation tolerance for the bound series.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Outer-sum length behind the tabulated one-dimensional bound table.
pub const TABLE_TERMS_1D: usize = 100;

/// Outer-sum length behind the tabulated two-dimensional bound table.
pub const TABLE_TERMS_2D: usize = 200;

const ROOT_REL_TOL: f64 = 1e-12;

/// Gap sequences of the one-dimensional closest packing.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingSequence {
    pub alpha: f64,
    /// Right-hand gaps `d_1, d_2, …`.
    pub d: Vec<f64>,
    /// Left-hand gaps `c_1, c_2, …`.
    pub c: Vec<f64>,
}

impl PackingSequence {
    /// Transmitter positions in placement order: `t_0 = 0`, then
    /// alternating right (`d_1 + … + d_k`) and left (`-(c_1 + … + c_k)`).
    pub fn positions(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + self.d.len() + self.c.len());
        out.push(0.0);
        let (mut right, mut left) = (0.0, 0.0);
        for k in 0..self.d.len() {
            right += self.d[k];
            out.push(right);
            if let Some(c) = self.c.get(k) {
                left += c;
                out.push(-left);
            }
        }
        out
    }

    pub fn transmitters(&self) -> Vec<Point> {
        self.positions().into_iter().map(Point::on_line).collect()
    }
}

/// Find `x > 0` with `f(x) = 0` for a strictly decreasing `f` that is
/// positive near zero, by bisection after expanding the upper bracket.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut hi: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut expansions = 0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 1100 || !hi.is_finite() {
            return Err(Error::Bracketing(format!("no sign change found up to {hi}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= ROOT_REL_TOL * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closest packing on the line with `k_max` transmitters on each side of
/// `t_0`.
pub fn packing_1d(alpha: f64, k_max: usize) -> Result<PackingSequence> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("packing needs alpha > 1, got {alpha}")));
    }
    if k_max == 0 {
        return Err(Error::invalid("k_max", "must be at least 1"));
    }
    let mut placed = vec![0.0f64];
    let (mut right, mut left) = (0.0f64, 0.0f64);
    let mut d = Vec::with_capacity(k_max);
    let mut c = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        // gap beyond the current right edge: distance to a placed node q is gap + (right - q)
        let offsets: Vec<f64> = placed.iter().map(|q| right - q).collect();
        let gap = bisect_decreasing(|x| offsets.iter().map(|o| (x + o).powf(-alpha)).sum::<f64>() - 1.0, 1.0)?;
        right += gap;
        placed.push(right);
        d.push(gap);

        let offsets: Vec<f64> = placed.iter().map(|q| q + left).collect();
        let gap = bisect_decreasing(|x| offsets.iter().map(|o| (x + o).powf(-alpha)).sum::<f64>() - 1.0, 1.0)?;
        left += gap;
        placed.push(-left);
        c.push(gap);
    }
    Ok(PackingSequence { alpha, d, c })
}

/// Closed-form lower bounds `(d_lb, c_lb)` on the `k`-th packing gaps.
pub fn lower_bound_separation(alpha: f64, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::invalid("k", "gap index starts at 1"));
    }
    let odd: f64 = (1..2 * k).map(|i| (i as f64).powf(-alpha)).sum();
    let even = odd + ((2 * k) as f64).powf(-alpha);
    Ok((odd.powf(1.0 / alpha), even.powf(1.0 / alpha)))
}

/// Interference at `t_0` from a packing with `k_max` nodes per side.
pub fn packed_interference_1d(alpha: f64, k_max: usize) -> Result<f64> {
    let packing = packing_1d(alpha, k_max)?;
    let mut total = 0.0;
    let (mut right, mut left) = (0.0, 0.0);
    for (d, c) in packing.d.iter().zip(&packing.c) {
        right += d;
        left += c;
        total += right.powf(-alpha) + left.powf(-alpha);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn from_int(d: u8) -> Result<Self> {
        match d {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            other => Err(Error::invalid("dim", format!("must be 1 or 2, got {other}"))),
        }
    }

    pub fn as_int(self) -> u8 {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }
}

/// A truncated evaluation of Ī₁ or Ī₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub alpha: f64,
    pub value: f64,
    pub terms_used: usize,
    /// Upper bound on the omitted tail; the infinite sum lies in
    /// `[value, value + truncation_estimate]`.
    pub truncation_estimate: f64,
}

impl BoundResult {
    /// A value guaranteed not to undercut the infinite series.
    pub fn upper(&self) -> f64 {
        self.value + self.truncation_estimate
    }
}

/// Term-by-term evaluation of Ī₁ / Ī₂. Yields the partial sum after each
/// outer term.
#[derive(Debug, Clone)]
pub struct BoundSeries {
    dim: Dimension,
    alpha: f64,
    n: usize,
    /// Σ_{i ≤ 2n} i^-α
    inner: f64,
    /// Σ_{k ≤ n} d_lb(k)
    d_sum: f64,
    /// Σ_{k ≤ n} c_lb(k)
    c_sum: f64,
    partial: f64,
}

impl BoundSeries {
    pub fn new(dim: Dimension, alpha: f64) -> Result<Self> {
        let ok = match dim {
            Dimension::One => alpha >= 2.0,
            Dimension::Two => alpha > 2.0,
        };
        if !ok || !alpha.is_finite() {
            let need = match dim {
                Dimension::One => "alpha >= 2",
                Dimension::Two => "alpha > 2 (the 2-D series diverges otherwise)",
            };
            return Err(Error::invalid("alpha", format!("{need}, got {alpha}")));
        }
        Ok(BoundSeries {
            dim,
            alpha,
            n: 0,
            inner: 0.0,
            d_sum: 0.0,
            c_sum: 0.0,
            partial: 0.0,
        })
    }

    pub fn terms(&self) -> usize {
        self.n
    }

    pub fn partial_sum(&self) -> f64 {
        self.partial
    }

    /// Rigorous bound on everything after the current term.
    ///
    /// Gap bounds increase with `k`, so for `m ≥ 1` the outer argument is at
    /// least `S_n + m·s_{n+1}`; the tail is dominated by
    /// `∫_0^∞ (S_n + x·s_{n+1})^-p dx = S_n^(1-p) / ((p-1)·s_{n+1})`.
    pub fn tail_bound(&self) -> f64 {
        let a = self.alpha;
        let odd_next = self.inner + ((2 * self.n + 1) as f64).powf(-a);
        let d_next = odd_next.powf(1.0 / a);
        let c_next = (odd_next + ((2 * self.n + 2) as f64).powf(-a)).powf(1.0 / a);
        let tail = |sum: f64, step: f64, p: f64| {
            if sum == 0.0 {
                f64::INFINITY
            } else {
                sum.powf(1.0 - p) / ((p - 1.0) * step)
            }
        };
        match self.dim {
            Dimension::One => tail(self.d_sum, d_next, a) + tail(self.c_sum, c_next, a),
            Dimension::Two => 6.0 * tail(self.d_sum, d_next, a - 1.0),
        }
    }

    pub fn result(&self) -> BoundResult {
        BoundResult {
            alpha: self.alpha,
            value: self.partial,
            terms_used: self.n,
            truncation_estimate: self.tail_bound(),
        }
    }
}

impl Iterator for BoundSeries {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let a = self.alpha;
        self.n += 1;
        let k = self.n;
        self.inner += ((2 * k - 1) as f64).powf(-a);
        self.d_sum += self.inner.powf(1.0 / a);
        self.inner += ((2 * k) as f64).powf(-a);
        self.c_sum += self.inner.powf(1.0 / a);
        self.partial += match self.dim {
            Dimension::One => self.c_sum.powf(-a) + self.d_sum.powf(-a),
            Dimension::Two => 6.0 * self.d_sum.powf(1.0 - a),
        };
        Some(self.partial)
    }
}

fn converge(dim: Dimension, alpha: f64, tolerance: f64) -> Result<BoundResult> {
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance", format!("must be positive, got {tolerance}")));
    }
    let mut series = BoundSeries::new(dim, alpha)?;
    // checking the tail costs a few powf calls, so only do it every so often
    loop {
        for _ in 0..64 {
            series.next();
        }
        if series.tail_bound() < tolerance {
            return Ok(series.result());
        }
    }
}

/// Ī₁[α] summed until the tail bound drops below `tolerance`.
pub fn i_bar_1(alpha: f64, tolerance: f64) -> Result<BoundResult> {
    converge(Dimension::One, alpha, tolerance)
}

/// Ī₂[α] summed until the tail bound drops below `tolerance`.
pub fn i_bar_2(alpha: f64, tolerance: f64) -> Result<BoundResult> {
    converge(Dimension::Two, alpha, tolerance)
}

/// The series truncated after exactly `terms` outer terms.
pub fn partial_bound(dim: Dimension, alpha: f64, terms: usize) -> Result<BoundResult> {
    if terms == 0 {
        return Err(Error::invalid("terms", "must be at least 1"));
    }
    let mut series = BoundSeries::new(dim, alpha)?;
    series.by_ref().take(terms).for_each(drop);
    Ok(series.result())
}

/// Converged bound for the given dimension.
pub fn i_bar(dim: Dimension, alpha: f64, tolerance: f64) -> Result<BoundResult> {
    converge(dim, alpha, tolerance)
}

/// Hexagonal-ring node placement around the origin with spacing 1: ring
/// `i` sits at radius `⌊d_1 + … + d_i⌋` and holds six nodes per unit of
/// radius. Rings that would repeat a radius are skipped.
pub fn hex_ring_layout(alpha: f64, rings: usize) -> Result<Vec<Vec<Point>>> {
    let packing = packing_1d(alpha, rings)?;
    let mut out: Vec<Vec<Point>> = Vec::with_capacity(rings);
    let mut radius_sum = 0.0;
    let mut last = 0;
    for d in &packing.d {
        radius_sum += d;
        let radius = radius_sum.floor() as i64;
        if radius <= last {
            continue;
        }
        last = radius;
        out.push(hex_ring(radius));
    }
    Ok(out)
}

/// The `6m` lattice points of hexagonal ring `m` (unit spacing).
fn hex_ring(m: i64) -> Vec<Point> {
    let h = 3f64.sqrt() / 2.0;
    let axial = |q: i64, r: i64| Point::new(q as f64 + 0.5 * r as f64, h * r as f64);
    let dirs = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)];
    let (mut q, mut r) = (m, 0);
    let mut out = Vec::with_capacity((6 * m) as usize);
    for (dq, dr) in dirs {
        for _ in 0..m {
            out.push(axial(q, r));
            q += dq;
            r += dr;
        }
    }
    out
}
