//! Scenario generation: random link placements, the three-link ordering
//! counterexample, density, and topology CSV files.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::carrier_sense::{cpcs_sequence_admits, AdmissionSequence};
use crate::channel::{path_loss, ChannelParams, Link, LinkId, Point};
use crate::error::{Error, Result};

const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TopologyKind {
    Uniform,
    /// Transmitters scattered with a Gaussian `spread` (meters, per axis)
    /// around `clusters` uniformly placed centers.
    Clustered { clusters: usize, spread: f64 },
}

impl TopologyKind {
    pub const DEFAULT_CLUSTERS: usize = 5;
    pub const DEFAULT_SPREAD: f64 = 150.0;

    pub fn clustered_default() -> Self {
        TopologyKind::Clustered {
            clusters: Self::DEFAULT_CLUSTERS,
            spread: Self::DEFAULT_SPREAD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub n_links: usize,
    pub width: f64,
    pub height: f64,
    pub min_len: f64,
    pub max_len: f64,
    pub seed: u64,
}

impl TopologySpec {
    /// `n_links` uniform links in a 3000 m × 3000 m square with lengths in
    /// [10 m, 250 m].
    pub fn new(kind: TopologyKind, n_links: usize, seed: u64) -> Self {
        TopologySpec {
            kind,
            n_links,
            width: 3000.0,
            height: 3000.0,
            min_len: 10.0,
            max_len: 250.0,
            seed,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(Error::invalid("area", format!("must be positive, got {} x {}", self.width, self.height)));
        }
        if !(self.min_len > 0.0 && self.min_len <= self.max_len && self.max_len.is_finite()) {
            return Err(Error::invalid(
                "link_len",
                format!("need 0 < min <= max, got [{}, {}]", self.min_len, self.max_len),
            ));
        }
        if self.min_len >= self.width.min(self.height) {
            return Err(Error::invalid("link_len", "links cannot fit inside the area"));
        }
        if let TopologyKind::Clustered { clusters, spread } = self.kind {
            if clusters == 0 {
                return Err(Error::invalid("clusters", "must be at least 1"));
            }
            if !(spread >= 0.0 && spread.is_finite()) {
                return Err(Error::invalid("spread", format!("must be >= 0, got {spread}")));
            }
        }
        Ok(())
    }

    fn contains(&self, p: &Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

/// Receiver at a uniform angle and uniform length from `tx`, redrawn until
/// it lies inside the area.
fn place_receiver(spec: &TopologySpec, tx: Point, rng: &mut ChaCha8Rng) -> Result<Point> {
    for _ in 0..MAX_REDRAWS {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let len = if spec.min_len == spec.max_len {
            spec.min_len
        } else {
            rng.random_range(spec.min_len..=spec.max_len)
        };
        let rx = Point::new(tx.x + len * theta.cos(), tx.y + len * theta.sin());
        if spec.contains(&rx) {
            return Ok(rx);
        }
    }
    Err(Error::invalid("area", "could not place a receiver inside the area"))
}

fn uniform_point(spec: &TopologySpec, rng: &mut ChaCha8Rng) -> Point {
    Point::new(rng.random_range(0.0..=spec.width), rng.random_range(0.0..=spec.height))
}

/// Links with transmitters uniform over the area.
pub fn gen_uniform(spec: &TopologySpec) -> Result<Vec<Link>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_links)
        .map(|i| {
            let tx = uniform_point(spec, &mut rng);
            let rx = place_receiver(spec, tx, &mut rng)?;
            Link::new(i as LinkId, tx, rx)
        })
        .collect()
}

/// Links with transmitters scattered around random cluster centers.
pub fn gen_clustered(spec: &TopologySpec) -> Result<Vec<Link>> {
    spec.validate()?;
    let TopologyKind::Clustered { clusters, spread } = spec.kind else {
        return Err(Error::invalid("kind", "gen_clustered needs a clustered spec"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Point> = (0..clusters).map(|_| uniform_point(spec, &mut rng)).collect();
    let offset = Normal::new(0.0, spread).map_err(|e| Error::invalid("spread", e.to_string()))?;
    (0..spec.n_links)
        .map(|i| {
            let c = centers[rng.random_range(0..clusters)];
            let tx = (0..MAX_REDRAWS)
                .map(|_| Point::new(c.x + offset.sample(&mut rng), c.y + offset.sample(&mut rng)))
                .find(|p| spec.contains(p))
                .ok_or_else(|| Error::invalid("spread", "could not place a transmitter inside the area"))?;
            let rx = place_receiver(spec, tx, &mut rng)?;
            Link::new(i as LinkId, tx, rx)
        })
        .collect()
}

/// Dispatch on `spec.kind`.
pub fn generate(spec: &TopologySpec) -> Result<Vec<Link>> {
    match spec.kind {
        TopologyKind::Uniform => gen_uniform(spec),
        TopologyKind::Clustered { .. } => gen_clustered(spec),
    }
}

/// Expected number of nodes (transmitters and receivers) inside one disk
/// of radius `d_max`: `2·|links|·π·d_max² / area`.
pub fn node_density(topology: &[Link], d_max: f64, area: f64) -> f64 {
    density_for(topology.len(), d_max, area)
}

/// Density of `n_links` links without building them.
pub fn density_for(n_links: usize, d_max: f64, area: f64) -> f64 {
    2.0 * n_links as f64 * std::f64::consts::PI * d_max * d_max / area
}

/// Number of links giving (approximately) the requested node density.
pub fn links_for_density(density: f64, d_max: f64, area: f64) -> usize {
    (density * area / (2.0 * std::f64::consts::PI * d_max * d_max)).round().max(1.0) as usize
}

/// Longest link in the topology.
pub fn max_link_length(topology: &[Link]) -> f64 {
    topology.iter().map(Link::length).fold(0.0, f64::max)
}

/// Three parallel links that CPCS admits in the order 1, 2, 3 but whose
/// final state pushes the power at the second transmitter over `t_cs`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCounterexample {
    pub links: [Link; 3],
    pub order: AdmissionSequence,
    /// Spacing between the first and second transmitter.
    pub h: f64,
    /// Spacing between the second and third transmitter.
    pub l: f64,
    pub t_cs: f64,
    pub alpha: f64,
    pub power: f64,
}

impl OrderingCounterexample {
    /// A `β` at which links 1 and 3 decode but link 2 does not.
    ///
    /// With parallel links the bi-directional distance is the transmitter
    /// spacing, so link 2 sees `h^-α + l^-α` and link 1 sees
    /// `h^-α + (h+l)^-α`. Any `β` strictly between the two SINRs works; the
    /// geometric mean is returned.
    pub fn witness_beta(&self) -> f64 {
        let a = self.alpha;
        let signal = path_loss(self.links[0].length(), a);
        let worst = path_loss(self.h, a) + path_loss(self.l, a);
        let next = path_loss(self.h, a) + path_loss(self.h + self.l, a);
        (signal / worst * signal / next).sqrt()
    }

    /// Noise-free channel at the witness `β`.
    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams::geometric(self.power, 0.0, self.alpha, self.witness_beta())
            .expect("parameters validated on construction")
    }

    /// Power measured at the second transmitter once all three are active.
    pub fn final_power_at_t2(&self) -> f64 {
        self.power * (path_loss(self.h, self.alpha) + path_loss(self.l, self.alpha))
    }
}

/// Smallest representable value `≥ x` for which `f` holds, stepping up one
/// ulp at a time from `x`.
fn nudge_up(mut x: f64, ok: impl Fn(f64) -> bool) -> f64 {
    while !ok(x) {
        // one ulp up; x is positive and finite here
        x = f64::from_bits(x.to_bits() + 1);
    }
    x
}

/// Build the ordering counterexample for threshold `t_cs` with `N = 0`:
/// `h = (t_cs/P)^(-1/α)` and `l` solving `l^-α + (h+l)^-α = t_cs/P`.
pub fn ordering_counterexample(t_cs: f64, alpha: f64, power: f64) -> Result<OrderingCounterexample> {
    if !(t_cs > 0.0 && t_cs.is_finite()) {
        return Err(Error::invalid("t_cs", format!("must be positive, got {t_cs}")));
    }
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::invalid("power", format!("must be positive, got {power}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
    }
    let target = t_cs / power;
    // rounding may leave the measured power a hair above t_cs; step outwards
    // until the boundary admission holds exactly
    let h = nudge_up(target.powf(-1.0 / alpha), |h| power * path_loss(h, alpha) <= t_cs);
    let f = |l: f64| path_loss(l, alpha) + path_loss(h + l, alpha) - target;
    // f decreases in l; f(h) > 0 because h^-α alone equals the target
    let (mut lo, mut hi) = (h, 2.0 * h);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let len = h / 4.0;
    let build = |l: f64| {
        let xs = [0.0, h, h + l];
        [0, 1, 2].map(|i| Link::new(i as LinkId, Point::new(xs[i], 0.0), Point::new(xs[i], len)).unwrap())
    };
    let params = ChannelParams::geometric(power, 0.0, alpha, 1.0)?;
    let l = nudge_up(hi, |l| cpcs_sequence_admits(&build(l), t_cs, &params).unwrap_or(false));
    let links = build(l);
    Ok(OrderingCounterexample {
        links,
        order: AdmissionSequence::new(vec![0, 1, 2])?,
        h,
        l,
        t_cs,
        alpha,
        power,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRow {
    link_id: LinkId,
    tx_x: f64,
    tx_y: f64,
    rx_x: f64,
    rx_y: f64,
}

pub fn write_topology<W: Write>(links: &[Link], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for l in links {
        w.serialize(LinkRow {
            link_id: l.id,
            tx_x: l.tx.x,
            tx_y: l.tx.y,
            rx_x: l.rx.x,
            rx_y: l.rx.y,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_topology<R: Read>(reader: R) -> Result<Vec<Link>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut links = Vec::new();
    for row in r.deserialize() {
        let row: LinkRow = row?;
        links.push(Link::new(row.link_id, Point::new(row.tx_x, row.tx_y), Point::new(row.rx_x, row.rx_y))?);
    }
    Ok(links)
}

pub fn save_topology(links: &[Link], path: &Path) -> Result<()> {
    write_topology(links, std::fs::File::create(path)?)
}

pub fn load_topology(path: &Path) -> Result<Vec<Link>> {
    read_topology(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{cumulative_power_at, first_infeasible};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn empty_topology() {
        let spec = TopologySpec::new(TopologyKind::Uniform, 0, 1);
        assert!(gen_uniform(&spec).unwrap().is_empty());
        assert_eq!(node_density(&[], 250.0, 9e6), 0.0);
    }

    #[test]
    fn lengths_and_positions_in_range() {
        for kind in [TopologyKind::Uniform, TopologyKind::clustered_default()] {
            let spec = TopologySpec::new(kind, 2000, 9);
            for l in generate(&spec).unwrap() {
                let len = l.length();
                assert!((10.0 - 1e-9..=250.0 + 1e-9).contains(&len), "{len}");
                assert!(spec.contains(&l.tx) && spec.contains(&l.rx));
            }
        }
    }

    #[test]
    fn generators_are_seed_deterministic() {
        for kind in [TopologyKind::Uniform, TopologyKind::clustered_default()] {
            let a = generate(&TopologySpec::new(kind, 100, 5)).unwrap();
            let b = generate(&TopologySpec::new(kind, 100, 5)).unwrap();
            let c = generate(&TopologySpec::new(kind, 100, 6)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn uniform_transmitters_pass_grid_chi_square() {
        let spec = TopologySpec::new(TopologyKind::Uniform, 100_000, 3);
        let mut counts = [0u32; 100];
        for l in gen_uniform(&spec).unwrap() {
            let gx = ((l.tx.x / 300.0) as usize).min(9);
            let gy = ((l.tx.y / 300.0) as usize).min(9);
            counts[gy * 10 + gx] += 1;
        }
        let expected = 1000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 99 degrees of freedom
        assert!(chi2 < 134.64, "chi2 = {chi2}");
    }

    #[test]
    fn zero_spread_collapses_onto_the_center() {
        let spec = TopologySpec {
            kind: TopologyKind::Clustered { clusters: 1, spread: 0.0 },
            ..TopologySpec::new(TopologyKind::Uniform, 50, 2)
        };
        let links = gen_clustered(&spec).unwrap();
        let c = links[0].tx;
        assert!(links.iter().all(|l| l.tx.distance(&c) < 1e-9));
    }

    fn max_cell_count(links: &[Link]) -> u32 {
        let mut counts = [0u32; 100];
        for l in links {
            let gx = ((l.tx.x / 300.0) as usize).min(9);
            let gy = ((l.tx.y / 300.0) as usize).min(9);
            counts[gy * 10 + gx] += 1;
        }
        *counts.iter().max().unwrap()
    }

    #[test]
    fn clustered_is_denser_locally() {
        let n = 300;
        let uniform = gen_uniform(&TopologySpec::new(TopologyKind::Uniform, n, 4)).unwrap();
        let clustered = gen_clustered(&TopologySpec::new(TopologyKind::clustered_default(), n, 4)).unwrap();
        assert!(max_cell_count(&clustered) > max_cell_count(&uniform));
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn many_wide_clusters_look_uniform() {
        let n = 4000;
        let spec = TopologySpec {
            kind: TopologyKind::Clustered { clusters: n, spread: 1e4 },
            ..TopologySpec::new(TopologyKind::Uniform, n, 8)
        };
        let clustered = gen_clustered(&spec).unwrap();
        let uniform = gen_uniform(&TopologySpec::new(TopologyKind::Uniform, n, 11)).unwrap();
        // critical value at level 0.01 for two equal samples of size n
        let crit = 1.628 * (2.0 / n as f64).sqrt();
        for coord in [|p: &Point| p.x, |p: &Point| p.y] {
            let d = ks(
                clustered.iter().map(|l| coord(&l.tx)).collect(),
                uniform.iter().map(|l| coord(&l.tx)).collect(),
            );
            assert!(d < crit, "KS {d} >= {crit}");
        }
    }

    #[test]
    fn density_arithmetic() {
        let d_max = (9e6 / (200.0 * std::f64::consts::PI)).sqrt();
        // 100 links hold 200 nodes
        assert!((density_for(100, d_max, 9e6) - 1.0).abs() < 1e-12);
        assert_eq!(links_for_density(1.0, d_max, 9e6), 100);
    }

    #[test]
    fn density_matches_probe_counts() {
        let d_max = 250.0;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut total, mut probes, mut want) = (0usize, 0usize, 0.0);
        for seed in 0..20 {
            let spec = TopologySpec::new(TopologyKind::Uniform, 150, seed);
            let links = gen_uniform(&spec).unwrap();
            let nodes: Vec<Point> = links.iter().flat_map(|l| [l.tx, l.rx]).collect();
            want = node_density(&links, d_max, spec.area());
            // probe away from the border so disks are not clipped
            for _ in 0..500 {
                let p = Point::new(rng.random_range(d_max..3000.0 - d_max), rng.random_range(d_max..3000.0 - d_max));
                total += nodes.iter().filter(|q| q.distance(&p) <= d_max).count();
                probes += 1;
            }
        }
        let empirical = total as f64 / probes as f64;
        assert!((empirical / want - 1.0).abs() < 0.05, "{empirical} vs {want}");
    }

    #[test]
    fn counterexample_at_unit_threshold() {
        let ce = ordering_counterexample(1.0, 2.0, 1.0).unwrap();
        assert_eq!(ce.h, 1.0);
        let c1 = crate::bounds::packing_1d(2.0, 1).unwrap().c[0];
        assert!((ce.l - c1).abs() < 1e-9, "{} vs {c1}", ce.l);
    }

    fn check_counterexample(t_cs: f64, alpha: f64, power: f64) {
        let ce = ordering_counterexample(t_cs, alpha, power).unwrap();
        let params = ce.channel_params();
        let ordered = ce.order.resolve(&ce.links).unwrap();
        assert!(cpcs_sequence_admits(&ordered, t_cs, &params).unwrap());
        let others = [ce.links[0].tx, ce.links[2].tx];
        let at_t2 = cumulative_power_at(&ce.links[1].tx, &others, &params, None).unwrap();
        assert!(at_t2 > t_cs);
        assert!((at_t2 - ce.final_power_at_t2()).abs() <= 1e-12 * at_t2);
        assert_eq!(first_infeasible(&ce.links, &params, None), Some(1));
        // the pairs are fine on their own
        for pair in [[0, 1], [1, 2], [0, 2]] {
            let sub = [ce.links[pair[0]], ce.links[pair[1]]];
            assert_eq!(first_infeasible(&sub, &params, None), None);
        }
    }

    #[test]
    fn counterexample_over_six_decades() {
        for k in 0..=24 {
            let t_cs = 10f64.powf(-12.0 + k as f64 * 0.25);
            for alpha in [2.0, 3.0, 4.0] {
                check_counterexample(t_cs, alpha, 1.0);
            }
        }
        check_counterexample(3e-7, 4.0, 0.1);
    }

    #[test]
    fn topology_csv_round_trip() {
        let links = gen_uniform(&TopologySpec::new(TopologyKind::Uniform, 40, 21)).unwrap();
        let mut buf = Vec::new();
        write_topology(&links, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("link_id,tx_x,tx_y,rx_x,rx_y\n"));
        assert_eq!(read_topology(buf.as_slice()).unwrap(), links);
    }

    #[test]
    fn spec_validation() {
        let mut spec = TopologySpec::new(TopologyKind::Uniform, 5, 0);
        spec.min_len = 300.0;
        assert!(gen_uniform(&spec).is_err());
        let spec = TopologySpec::new(TopologyKind::Clustered { clusters: 0, spread: 1.0 }, 5, 0);
        assert!(gen_clustered(&spec).is_err());
        let spec = TopologySpec::new(TopologyKind::Uniform, 5, 0);
        assert!(gen_clustered(&spec).is_err());
    }

    proptest! {
        #[test]
        fn counterexample_scales_with_threshold(t in -6.0f64..6.0, s in 0.1f64..10.0, alpha in 2.0f64..6.0) {
            let t_cs = 10f64.powf(t);
            let a = ordering_counterexample(t_cs, alpha, 1.0).unwrap();
            let b = ordering_counterexample(t_cs * s.powf(-alpha), alpha, 1.0).unwrap();
            prop_assert!((b.h / a.h - s).abs() < 1e-9 * s);
            prop_assert!((b.l / a.l - s).abs() < 1e-9 * s);
        }
    }
}
