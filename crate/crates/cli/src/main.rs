//! `sinrcs`: bounds, thresholds, simulations, sweeps and safety checks.
//!
//! Exit status is 0 on success (and when no counterexample exists), 1 when
//! `verify` finds a counterexample, and 2 for configuration or input errors.

mod charts;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use sinrcs::bounds::{i_bar, partial_bound, Dimension};
use sinrcs::carrier_sense::{
    cpcs_sequence_admits, max_tx_distance, static_cpcs_threshold, static_ipcs_range, CsConfig,
};
use sinrcs::channel::{first_infeasible, ChannelParams, Link};
use sinrcs::config::{Scenario, TopologySource};
use sinrcs::metrics::{write_reports, MetricReport};
use sinrcs::sim::log::write_event_log;
use sinrcs::sim::{derive_seed, run, write_link_stats, write_thresholds, Sensing, SimOutput};
use sinrcs::topology::{links_for_density, node_density, ordering_counterexample, write_topology};
use sinrcs::verify::{benchmark_sweep, check_topology, log_grid, write_benchmark, write_surface, SweepSpec, EXHAUSTIVE_MAX_LINKS};

use charts::{Chart, Series};
use output::{csv_rows, write_atomic, write_with};

#[derive(Parser)]
#[command(name = "sinrcs", version, about = "Interference-safe carrier sensing for dense CSMA networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the interference bounds Ī₁[α] and Ī₂[α] as CSV.
    Bounds(BoundsArgs),
    /// Print the interference-safe CPCS threshold and IPCS range.
    Threshold(ThresholdArgs),
    /// Run one scenario, or the scenario at several densities.
    Simulate(SimulateArgs),
    /// Sweep static CPCS thresholds over densities and extract benchmarks.
    Sweep(SweepArgs),
    /// Search a scenario's topologies for an admitted but infeasible state.
    Verify(VerifyArgs),
    /// Build the three-link ordering counterexample.
    Counterexample(CounterexampleArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// Path-loss exponents, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Sum exactly this many outer terms instead of converging to
    /// `--tolerance`.
    #[arg(long, conflicts_with = "tolerance")]
    terms: Option<usize>,
    /// Which series: 1, 2, or both when omitted.
    #[arg(long)]
    dim: Option<u8>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    dmax: f64,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long = "beta-db", default_value_t = 20.0)]
    beta_db: f64,
    #[arg(long, default_value_t = 1.0)]
    power: f64,
    #[arg(long, default_value_t = 1e-13)]
    noise: f64,
    #[arg(long, default_value_t = 2)]
    dim: u8,
    /// Use this bound instead of Ī_d[α].
    #[arg(long = "i-bound")]
    i_bound: Option<f64>,
}

#[derive(Args)]
struct Common {
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel runs (all cores by default).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run at these node densities instead of the configured link count.
    #[arg(long, value_delimiter = ',')]
    densities: Vec<f64>,
    /// Starvation threshold in bit/s (default: each run's median goodput).
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    densities: Vec<f64>,
    /// Explicit thresholds in watts.
    #[arg(long, value_delimiter = ',')]
    tcs: Vec<f64>,
    /// Log-spaced grid from t* to `--tcs-max-ratio`·t* when `--tcs` is absent.
    #[arg(long = "tcs-points", default_value_t = 9)]
    tcs_points: usize,
    #[arg(long = "tcs-max-ratio", default_value_t = 1e4)]
    tcs_max_ratio: f64,
    /// Topologies per grid cell.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Topologies to check; instance 0 uses the configured topology seed.
    #[arg(long, default_value_t = 1)]
    instances: usize,
    /// Sampled orderings per topology when it is too large to enumerate.
    #[arg(long, default_value_t = sinrcs::verify::DEFAULT_SAMPLES)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    tcs: f64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    power: f64,
    /// Also write the topology CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Outcome {
    Done,
    Counterexample,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bounds(a) => bounds(a),
        Command::Threshold(a) => threshold(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::Counterexample(a) => counterexample(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Counterexample) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    Ok(b.build()?)
}

fn load(config: &Path, common: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(config).with_context(|| format!("reading {}", config.display()))?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn bounds(a: BoundsArgs) -> Result<Outcome> {
    let dims: Vec<Dimension> = match a.dim {
        None => vec![Dimension::One, Dimension::Two],
        Some(d) => vec![Dimension::from_int(d)?],
    };
    let mut header = vec!["alpha".to_owned()];
    for d in &dims {
        let k = d.as_int();
        header.extend([format!("i_bar_{k}"), format!("terms_used_{k}"), format!("truncation_{k}")]);
    }
    let mut rows = Vec::with_capacity(a.alpha.len());
    for &alpha in &a.alpha {
        let mut row = vec![alpha.to_string()];
        for &d in &dims {
            let r = match a.terms {
                Some(n) => partial_bound(d, alpha, n),
                None => i_bar(d, alpha, a.tolerance),
            }
                .with_context(|| format!("{}-D series at alpha = {alpha}", d.as_int()))?;
            row.extend([r.value.to_string(), r.terms_used.to_string(), r.truncation_estimate.to_string()]);
        }
        rows.push(row);
    }
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct ThresholdRow {
    d_max: f64,
    dim: u8,
    i_bound: f64,
    t_cs: f64,
    r_cs: f64,
}

fn threshold(a: ThresholdArgs) -> Result<Outcome> {
    let ch = ChannelParams::new(a.power, a.noise, a.alpha, 10f64.powf(a.beta_db / 10.0))?;
    if let Ok(reach) = max_tx_distance(&ch) {
        if a.dmax > reach {
            eprintln!("warning: d_max {} exceeds the maximum transmission distance {reach:.3} m", a.dmax);
        }
    }
    let dim = Dimension::from_int(a.dim)?;
    let i = match a.i_bound {
        Some(v) => v,
        None => i_bar(dim, a.alpha, 1e-6)?.upper(),
    };
    let row = ThresholdRow {
        d_max: a.dmax,
        dim: a.dim,
        i_bound: i,
        t_cs: static_cpcs_threshold(a.dmax, &ch, i)?,
        r_cs: static_ipcs_range(a.dmax, &ch, i)?,
    };
    print!("{}", String::from_utf8(csv_rows(&[row])?)?);
    Ok(Outcome::Done)
}

struct Run {
    density: f64,
    links: Vec<Link>,
    t_star: Option<f64>,
    output: SimOutput,
}

fn run_scenario(s: &Scenario, base: Option<&Path>) -> Result<Run> {
    let links = s.build_topology(base)?;
    let cfg = s.sim_config(&links)?;
    let t_star = match cfg.sensing {
        Sensing::Adaptive { params, .. } => Some(params.t_cs_init),
        Sensing::Static(_) => None,
    };
    let density = node_density(&links, s.max_len, s.width * s.height);
    let output = run(&links, &cfg)?;
    Ok(Run {
        density,
        links,
        t_star,
        output,
    })
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let s = load(&a.config, &a.common)?;
    let base = a.config.parent();
    let runs: Vec<Run> = if a.densities.is_empty() {
        vec![run_scenario(&s, base)?]
    } else {
        if matches!(s.topology, TopologySource::File(_)) {
            bail!("--densities needs a generated topology, not a topology file");
        }
        let area = s.width * s.height;
        let variants: Vec<Scenario> = a
            .densities
            .iter()
            .enumerate()
            .map(|(i, &d)| Scenario {
                n_links: links_for_density(d, s.max_len, area).max(1),
                topology_seed: derive_seed(s.topology_seed, i as u64),
                seed: derive_seed(s.seed, i as u64),
                ..s.clone()
            })
            .collect();
        pool(a.common.jobs)?.install(|| variants.par_iter().map(|v| run_scenario(v, base)).collect::<Result<_>>())?
    };

    let label = s.sim_config(&runs[0].links)?.sensing.label();
    let reports: Vec<MetricReport> = runs
        .iter()
        .map(|r| MetricReport::from_stats(&s.scenario_id, r.density, label, &r.output.stats, a.rho))
        .collect::<sinrcs::Result<_>>()?;
    write_with(&a.out.join("metrics.csv"), |w| write_reports(&reports, w))?;
    for (i, r) in runs.iter().enumerate() {
        let dir = if runs.len() == 1 { a.out.clone() } else { a.out.join(format!("run-{i}")) };
        write_with(&dir.join("topology.csv"), |w| write_topology(&r.links, w))?;
        write_with(&dir.join("link_stats.csv"), |w| write_link_stats(&r.output.stats, w))?;
        write_with(&dir.join("thresholds.csv"), |w| write_thresholds(&r.output.thresholds, w))?;
        if s.record_events {
            write_with(&dir.join("events.csv"), |w| write_event_log(&r.output.events, w))?;
        }
        threshold_chart(&dir.join("thresholds.svg"), r)?;
    }
    density_charts(&a.out, &reports)?;

    println!("density,mechanism,aggregate_goodput_bps,jain,failure_rate,starvation_ratio");
    for r in &reports {
        println!(
            "{:.4},{},{:.6e},{:.4},{:.4},{:.4}",
            r.density, r.mechanism, r.aggregate_goodput_bps, r.jain, r.failure_rate, r.starvation_ratio
        );
    }
    Ok(Outcome::Done)
}

fn density_charts(out: &Path, reports: &[MetricReport]) -> Result<()> {
    let series = |f: fn(&MetricReport) -> f64| {
        vec![Series {
            name: reports[0].mechanism.clone(),
            points: reports.iter().map(|r| (r.density, f(r))).collect(),
        }]
    };
    let chart = |title, y_label| Chart {
        title,
        x_label: "node density",
        y_label,
        log_x: false,
        log_y: false,
    };
    charts::save(
        &out.join("goodput_vs_density.svg"),
        &chart("Aggregate goodput", "goodput (bit/s)"),
        &series(|r| r.aggregate_goodput_bps),
    )?;
    charts::save(&out.join("jain_vs_density.svg"), &chart("Jain's fairness index", "Jain index"), &series(|r| r.jain))
}

/// Mean threshold over all nodes, and a few individual nodes, against time.
fn threshold_chart(path: &Path, r: &Run) -> Result<()> {
    let n = r.links.len();
    let mut current: Vec<f64> = vec![f64::NAN; n];
    let mut mean = Vec::new();
    let mut traced: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n.min(4)];
    for s in &r.output.thresholds {
        let node = s.node_id as usize;
        current[node] = s.t_cs_watts;
        let t_ms = s.time_us / 1e3;
        if node < traced.len() {
            traced[node].push((t_ms, s.t_cs_watts));
        }
        if current.iter().all(|c| c.is_finite()) {
            mean.push((t_ms, current.iter().sum::<f64>() / n as f64));
        }
    }
    let mut series = vec![Series {
        name: "mean over nodes".into(),
        points: mean,
    }];
    series.extend(traced.into_iter().enumerate().map(|(i, points)| Series {
        name: format!("node {i}"),
        points,
    }));
    let title = match r.t_star {
        Some(_) => "Carrier-sensing thresholds",
        None => "Carrier-sensing threshold (static)",
    };
    charts::save(
        path,
        &Chart {
            title,
            x_label: "time (ms)",
            y_label: "t_cs (W)",
            log_x: false,
            log_y: true,
        },
        &series,
    )
}

fn sweep(a: SweepArgs) -> Result<Outcome> {
    let s = load(&a.config, &a.common)?;
    if matches!(s.topology, TopologySource::File(_)) {
        bail!("sweep generates its own topologies; use a uniform or clustered scenario");
    }
    let geometry = s.topology_spec();
    let probe = sinrcs::topology::generate(&sinrcs::topology::TopologySpec { n_links: 1, ..geometry })?;
    let mut sim = s.sim_config(&probe)?;
    sim.sensing = Sensing::Static(CsConfig::Cpcs { t_cs: sim.channel.noise * 2.0 });
    let t_cs = if a.tcs.is_empty() {
        let ch = s.channel()?;
        let t_star = static_cpcs_threshold(s.max_len, &ch, s.i_bound()?)?;
        log_grid(t_star, t_star * a.tcs_max_ratio, a.tcs_points)?
    } else {
        a.tcs.clone()
    };
    let spec = SweepSpec {
        densities: a.densities.clone(),
        t_cs,
        seeds: (0..a.seeds.max(1) as u64).map(|i| derive_seed(s.seed, i)).collect(),
        kind: geometry.kind,
        geometry,
        sim,
    };
    let result = benchmark_sweep(&spec, a.common.jobs)?;
    write_with(&a.out.join("surface.csv"), |w| write_surface(&result.surface, w))?;
    write_with(&a.out.join("benchmark.csv"), |w| write_benchmark(&result.benchmark, w))?;

    let per_density: Vec<Series> = spec
        .densities
        .iter()
        .map(|&d| Series {
            name: format!("density {d}"),
            points: result.row(d).iter().map(|p| (p.t_cs, p.goodput_bps)).collect(),
        })
        .collect();
    charts::save(
        &a.out.join("surface_goodput.svg"),
        &Chart {
            title: "Aggregate goodput against threshold",
            x_label: "t_cs (W)",
            y_label: "goodput (bit/s)",
            log_x: true,
            log_y: false,
        },
        &per_density,
    )?;
    charts::save(
        &a.out.join("benchmark.svg"),
        &Chart {
            title: "Benchmark thresholds",
            x_label: "node density",
            y_label: "t_cs (W)",
            log_x: false,
            log_y: true,
        },
        &[
            Series {
                name: "optimal goodput".into(),
                points: result.benchmark.iter().map(|b| (b.density, b.argmax_t_cs_goodput)).collect(),
            },
            Series {
                name: "optimal fairness".into(),
                points: result.benchmark.iter().map(|b| (b.density, b.argmax_t_cs_fairness)).collect(),
            },
        ],
    )?;
    print!("{}", String::from_utf8(csv_rows(&result.benchmark)?)?);
    Ok(Outcome::Done)
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    let s = load(&a.config, &a.common)?;
    let base = a.config.parent();
    let ch = s.channel()?;
    let mut exhaustive = true;
    for i in 0..a.instances.max(1) {
        let variant = Scenario {
            topology_seed: if i == 0 { s.topology_seed } else { derive_seed(s.topology_seed, i as u64) },
            ..s.clone()
        };
        let links = variant.build_topology(base)?;
        let cs = match variant.sim_config(&links)?.sensing {
            Sensing::Static(cs) => cs,
            Sensing::Adaptive { .. } => bail!("verify needs a static sensing mode (cpcs, ipcs or legacy)"),
        };
        exhaustive &= links.len() <= EXHAUSTIVE_MAX_LINKS;
        if let Some(c) = check_topology(&links, &cs, &ch, a.samples, derive_seed(s.seed, i as u64))? {
            let seq: Vec<String> = c.sequence.iter().map(|id| id.to_string()).collect();
            println!("counterexample: instance {i}, sequence {}, link {} infeasible", seq.join(","), c.link);
            return Ok(Outcome::Counterexample);
        }
    }
    let mode = if exhaustive { "exhaustive" } else { "randomized" };
    println!("no counterexample ({} topologies, {mode})", a.instances.max(1));
    Ok(Outcome::Done)
}

fn counterexample(a: CounterexampleArgs) -> Result<Outcome> {
    let ex = ordering_counterexample(a.tcs, a.alpha, a.power)?;
    let ch = ex.channel_params();
    let mut buf = Vec::new();
    write_topology(&ex.links, &mut buf)?;
    print!("{}", String::from_utf8(buf.clone())?);
    if let Some(path) = &a.out {
        write_atomic(path, &buf)?;
    }
    let admitted = cpcs_sequence_admits(&ex.links, a.tcs, &ch)?;
    let bad = first_infeasible(&ex.links, &ch, None);
    match (admitted, bad) {
        (true, Some(i)) => println!("sequence admitted, state infeasible at t{}", i + 1),
        (true, None) => println!("sequence admitted, state feasible"),
        (false, _) => return Err(anyhow!("construction failed: sequence not admitted")),
    }
    Ok(Outcome::Done)
}
