//! Scalar performance metrics over per-link results.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-link counters that the metrics need.
pub trait LinkOutcome {
    fn goodput(&self) -> f64;
    fn successes(&self) -> u64;
    fn failures(&self) -> u64;
}

fn check_goodputs(goodputs: &[f64]) -> Result<()> {
    if goodputs.is_empty() {
        return Err(Error::invalid("goodputs", "need at least one link"));
    }
    if let Some(g) = goodputs.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(Error::invalid("goodputs", format!("must be finite and >= 0, got {g}")));
    }
    Ok(())
}

/// Jain's fairness index `(Σλ)² / (n·Σλ²)`, in `[1/n, 1]`.
pub fn jain_index(goodputs: &[f64]) -> Result<f64> {
    check_goodputs(goodputs)?;
    // scale by the maximum so large goodputs do not overflow when squared
    let max = goodputs.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::invalid("goodputs", "all goodputs are zero"));
    }
    let (sum, sum_sq) = goodputs
        .iter()
        .map(|g| g / max)
        .fold((0.0, 0.0), |(s, q), g| (s + g, q + g * g));
    let n = goodputs.len() as f64;
    Ok((sum * sum / (n * sum_sq)).clamp(1.0 / n, 1.0))
}

/// Fraction of links whose goodput is at most `rho`.
pub fn starvation_ratio(goodputs: &[f64], rho: f64) -> Result<f64> {
    check_goodputs(goodputs)?;
    let starved = goodputs.iter().filter(|&&g| g <= rho).count();
    Ok(starved as f64 / goodputs.len() as f64)
}

/// Median goodput (mean of the middle pair for even counts).
pub fn median(values: &[f64]) -> Result<f64> {
    check_goodputs(values)?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn aggregate_goodput<S: LinkOutcome>(stats: &[S]) -> f64 {
    stats.iter().map(LinkOutcome::goodput).sum()
}

/// `Σ failures / Σ (successes + failures)`; zero when nothing was sent.
pub fn failure_rate<S: LinkOutcome>(stats: &[S]) -> f64 {
    let (ok, bad) = stats
        .iter()
        .fold((0u64, 0u64), |(s, f), l| (s + l.successes(), f + l.failures()));
    if ok + bad == 0 {
        0.0
    } else {
        bad as f64 / (ok + bad) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario_id: String,
    pub density: f64,
    pub mechanism: String,
    pub aggregate_goodput_bps: f64,
    pub jain: f64,
    pub failure_rate: f64,
    pub starvation_ratio: f64,
    /// Starvation threshold ρ used for `starvation_ratio`.
    pub rho_bps: f64,
}

impl MetricReport {
    /// Summarize one run. With `rho = None` the run's own median goodput is
    /// used.
    pub fn from_stats<S: LinkOutcome>(
        scenario_id: impl Into<String>,
        density: f64,
        mechanism: impl Into<String>,
        stats: &[S],
        rho: Option<f64>,
    ) -> Result<Self> {
        let goodputs: Vec<f64> = stats.iter().map(LinkOutcome::goodput).collect();
        let rho = match rho {
            Some(r) => r,
            None => median(&goodputs)?,
        };
        // a run where nothing got through is maximally unfair by convention
        let jain = if goodputs.iter().all(|&g| g == 0.0) && !goodputs.is_empty() {
            1.0 / goodputs.len() as f64
        } else {
            jain_index(&goodputs)?
        };
        Ok(MetricReport {
            scenario_id: scenario_id.into(),
            density,
            mechanism: mechanism.into(),
            aggregate_goodput_bps: goodputs.iter().sum(),
            jain,
            failure_rate: failure_rate(stats),
            starvation_ratio: starvation_ratio(&goodputs, rho)?,
            rho_bps: rho,
        })
    }
}

pub fn write_reports<W: Write>(reports: &[MetricReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
