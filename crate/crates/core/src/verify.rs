//! Independent oracles: exhaustive interference-safety checking on small
//! topologies and static-threshold benchmark sweeps.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carrier_sense::CsConfig;
use crate::channel::{first_infeasible, path_loss, ChannelParams, Link, LinkId};
use crate::error::{Error, Result};
use crate::metrics::{failure_rate, jain_index};
use crate::sim::{derive_seed, run, Sensing, SimConfig};
use crate::topology::{generate, links_for_density, TopologyKind, TopologySpec};

/// Largest topology the exhaustive checker accepts.
pub const EXHAUSTIVE_MAX_LINKS: usize = 10;

/// Sampled (subset, order) pairs per topology in randomized mode.
pub const DEFAULT_SAMPLES: usize = 10_000;

/// An admitted sequence whose concurrent state is infeasible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Link ids in admission order. For IPCS the order is immaterial.
    pub sequence: Vec<LinkId>,
    /// The link whose SINR falls below `β`.
    pub link: LinkId,
}

/// Pairwise transmitter-to-transmitter received power, `m[j·n + k]` being
/// the power of `j` measured at `k`.
fn tx_power_matrix(links: &[Link], params: &ChannelParams) -> Vec<f64> {
    let n = links.len();
    let mut m = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            if j != k {
                m[j * n + k] = params.power * path_loss(links[j].tx.distance(&links[k].tx), params.alpha);
            }
        }
    }
    m
}

fn members(mask: usize, n: usize) -> impl DoubleEndedIterator<Item = usize> {
    (0..n).filter(move |i| mask >> i & 1 == 1)
}

/// Exhaustively search for an admitted sequence (CPCS) or admitted set
/// (IPCS) whose concurrent state violates bi-directional SINR feasibility.
///
/// CPCS admission is prefix-closed and feasibility depends only on the set,
/// so the search runs over subsets: a subset is reachable when some member
/// can be admitted last on top of a reachable remainder. Subsets are
/// visited by size, so the returned counterexample is a smallest one.
pub fn check_interference_safety(
    topology: &[Link],
    cs: &CsConfig,
    params: &ChannelParams,
) -> Result<Option<Counterexample>> {
    let n = topology.len();
    if n > EXHAUSTIVE_MAX_LINKS {
        return Err(Error::TooLarge {
            links: n,
            max: EXHAUSTIVE_MAX_LINKS,
        });
    }
    let full = 1usize << n;
    let power = tx_power_matrix(topology, params);
    // parent[mask] = the link admitted last, or NONE when unreachable
    const NONE: u8 = u8::MAX;
    let mut parent = vec![NONE; full];
    let mut masks: Vec<usize> = (1..full).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let last = match *cs {
            // prefer the highest index as the last admission, so sequences come
            // out in index order where possible
            CsConfig::Cpcs { t_cs } => members(mask, n).rev().find(|&k| {
                let rest = mask & !(1 << k);
                let reachable = rest == 0 || parent[rest] != NONE;
                reachable && params.noise + members(rest, n).map(|j| power[j * n + k]).sum::<f64>() <= t_cs
            }),
            CsConfig::Ipcs { r_cs } => {
                let k = mask.trailing_zeros() as usize;
                let rest = mask & !(1 << k);
                let separated = members(rest, n).all(|j| topology[j].tx.distance(&topology[k].tx) >= r_cs);
                ((rest == 0 || parent[rest] != NONE) && separated).then_some(k)
            }
        };
        let Some(last) = last else { continue };
        parent[mask] = last as u8;
        let state: Vec<Link> = members(mask, n).map(|i| topology[i]).collect();
        if let Some(bad) = first_infeasible(&state, params, None) {
            return Ok(Some(Counterexample {
                sequence: unwind(&parent, mask).into_iter().map(|i| topology[i].id).collect(),
                link: state[bad].id,
            }));
        }
    }
    Ok(None)
}

fn unwind(parent: &[u8], mut mask: usize) -> Vec<usize> {
    let mut seq = Vec::new();
    while mask != 0 {
        let k = parent[mask] as usize;
        seq.push(k);
        mask &= !(1 << k);
    }
    seq.reverse();
    seq
}

/// Randomized search for larger topologies: draws `samples` random
/// orderings of random subsets, admits the longest admissible prefix of
/// each and checks every admitted prefix for feasibility.
pub fn check_interference_safety_randomized<R: Rng + ?Sized>(
    topology: &[Link],
    cs: &CsConfig,
    params: &ChannelParams,
    samples: usize,
    rng: &mut R,
) -> Result<Option<Counterexample>> {
    let n = topology.len();
    if n == 0 {
        return Ok(None);
    }
    let power = tx_power_matrix(topology, params);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..samples {
        order.shuffle(rng);
        let size = rng.random_range(1..=n);
        let mut admitted: Vec<usize> = Vec::with_capacity(size);
        for &k in &order[..size] {
            let ok = match *cs {
                CsConfig::Cpcs { t_cs } => params.noise + admitted.iter().map(|&j| power[j * n + k]).sum::<f64>() <= t_cs,
                CsConfig::Ipcs { r_cs } => admitted
                    .iter()
                    .all(|&j| topology[j].tx.distance(&topology[k].tx) >= r_cs),
            };
            if !ok {
                break;
            }
            admitted.push(k);
            let state: Vec<Link> = admitted.iter().map(|&i| topology[i]).collect();
            if let Some(bad) = first_infeasible(&state, params, None) {
                return Ok(Some(Counterexample {
                    sequence: state.iter().map(|l| l.id).collect(),
                    link: state[bad].id,
                }));
            }
        }
    }
    Ok(None)
}

/// Exhaustive check when the topology is small enough, otherwise
/// `samples` random orderings drawn from `seed`.
pub fn check_topology(
    topology: &[Link],
    cs: &CsConfig,
    params: &ChannelParams,
    samples: usize,
    seed: u64,
) -> Result<Option<Counterexample>> {
    if topology.len() <= EXHAUSTIVE_MAX_LINKS {
        check_interference_safety(topology, cs, params)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check_interference_safety_randomized(topology, cs, params, samples, &mut rng)
    }
}

/// One grid cell of a benchmark sweep, averaged over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub density: f64,
    pub t_cs: f64,
    pub goodput_bps: f64,
    pub jain: f64,
    pub failure_rate: f64,
}

/// Per-density thresholds maximizing goodput and fairness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPoint {
    pub density: f64,
    pub argmax_t_cs_goodput: f64,
    pub argmax_t_cs_fairness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Node densities (nodes per transmission disk of radius `max_len`).
    pub densities: Vec<f64>,
    pub t_cs: Vec<f64>,
    pub seeds: Vec<u64>,
    pub kind: TopologyKind,
    /// Template for the topology geometry; `n_links` and `seed` are
    /// overwritten per cell.
    pub geometry: TopologySpec,
    /// Template for every run; sensing and seed are overwritten per cell.
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    /// Row-major over (density, t_cs).
    pub surface: Vec<SurfacePoint>,
    pub benchmark: Vec<BenchmarkPoint>,
}

impl Sweep {
    /// Surface cells at one density, in threshold order.
    pub fn row(&self, density: f64) -> Vec<SurfacePoint> {
        self.surface.iter().filter(|p| p.density == density).copied().collect()
    }
}

/// `points` thresholds spaced evenly in log scale over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(Error::invalid("grid", format!("need 0 < lo <= hi and points >= 1, got [{lo}, {hi}] x {points}")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Topology for density `density` and seed `seed` under `spec`.
pub fn sweep_topology(spec: &SweepSpec, density_index: usize, seed: u64) -> Result<Vec<Link>> {
    let density = spec.densities[density_index];
    let geo = TopologySpec {
        kind: spec.kind,
        n_links: links_for_density(density, spec.geometry.max_len, spec.geometry.area()).max(1),
        seed: derive_seed(seed, density_index as u64),
        ..spec.geometry
    };
    generate(&geo)
}

/// Run static CPCS at every (density, threshold) cell, averaging over the
/// seeds, and extract the per-density argmax curves. Cells run in parallel
/// on `jobs` threads (all cores when `None`); results do not depend on it.
pub fn benchmark_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Sweep> {
    if spec.densities.is_empty() || spec.t_cs.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one density, threshold and seed".into()));
    }
    for &t in &spec.t_cs {
        CsConfig::cpcs(t, &spec.sim.channel).map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;

    let topologies: Vec<Vec<Vec<Link>>> = (0..spec.densities.len())
        .map(|d| spec.seeds.iter().map(|&s| sweep_topology(spec, d, s)).collect())
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..spec.densities.len())
        .flat_map(|d| (0..spec.t_cs.len()).flat_map(move |t| (0..spec.seeds.len()).map(move |s| (d, t, s))))
        .collect();
    let runs: Vec<(f64, f64, f64)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, t, s)| {
                let mut cfg = spec.sim.clone();
                cfg.sensing = Sensing::Static(CsConfig::Cpcs { t_cs: spec.t_cs[t] });
                cfg.seed = derive_seed(spec.seeds[s], (d * spec.t_cs.len() + t) as u64);
                cfg.record_events = false;
                let out = run(&topologies[d][s], &cfg)?;
                let g = out.goodputs();
                let jain = if g.iter().all(|&x| x == 0.0) {
                    1.0 / g.len() as f64
                } else {
                    jain_index(&g)?
                };
                Ok((out.report.aggregate_goodput_bps, jain, failure_rate(&out.stats)))
            })
            .collect::<Result<_>>()
    })?;

    let k = spec.seeds.len() as f64;
    let mut surface = Vec::with_capacity(spec.densities.len() * spec.t_cs.len());
    for (d, &density) in spec.densities.iter().enumerate() {
        for (t, &t_cs) in spec.t_cs.iter().enumerate() {
            let base = (d * spec.t_cs.len() + t) * spec.seeds.len();
            let cell = &runs[base..base + spec.seeds.len()];
            surface.push(SurfacePoint {
                density,
                t_cs,
                goodput_bps: cell.iter().map(|c| c.0).sum::<f64>() / k,
                jain: cell.iter().map(|c| c.1).sum::<f64>() / k,
                failure_rate: cell.iter().map(|c| c.2).sum::<f64>() / k,
            });
        }
    }
    let benchmark = spec
        .densities
        .iter()
        .enumerate()
        .map(|(d, &density)| {
            let row = &surface[d * spec.t_cs.len()..(d + 1) * spec.t_cs.len()];
            let best = |f: fn(&SurfacePoint) -> f64| {
                row.iter()
                    .max_by(|a, b| f(a).total_cmp(&f(b)))
                    .map(|p| p.t_cs)
                    .expect("non-empty grid")
            };
            BenchmarkPoint {
                density,
                argmax_t_cs_goodput: best(|p| p.goodput_bps),
                argmax_t_cs_fairness: best(|p| p.jain),
            }
        })
        .collect();
    Ok(Sweep { surface, benchmark })
}

pub fn write_surface<W: Write>(surface: &[SurfacePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in surface {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_benchmark<W: Write>(curve: &[BenchmarkPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
