//! Bond (and site) percolation on the open simple-cubic lattice.
//!
//! Cluster numbers `n_s` are normalized per lattice site: `n_s` is the number
//! of finite clusters of size `s` divided by the number of sites.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cluster::{label_clusters, label_clusters_where, ClusterPartition};
use crate::error::{invalid, Result};
use crate::exponent::mean_se;
use crate::events::EventRecord;
use crate::lattice::{forward, Axis, Boundary, Dims, Lattice3D};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Bond,
    Site,
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bond" => Ok(Mode::Bond),
            "site" => Ok(Mode::Site),
            other => Err(invalid("mode", format!("expected bond|site, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Bond => "bond",
            Mode::Site => "site",
        })
    }
}

/// One sampled configuration. In bond mode `open` holds the three forward
/// bonds of every site (`site * 3 + axis`); bonds leaving the lattice do not
/// exist and are always closed. In site mode `open` holds site occupancy.
#[derive(Clone, Debug, PartialEq)]
pub struct BondConfig {
    dims: Dims,
    p: f64,
    mode: Mode,
    open: Vec<bool>,
}

const BOUNDARY: Boundary = Boundary::Open;

fn axis_slot(axis: Axis) -> usize {
    match axis {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    }
}

impl BondConfig {
    /// Builds a configuration by thresholding per-element uniforms at `p`:
    /// an element is open iff its uniform is below `p`. Sharing the uniforms
    /// across `p` values couples the configurations monotonically.
    pub fn from_uniforms(dims: Dims, p: f64, mode: Mode, uniforms: &Uniforms) -> Result<Self> {
        check_p(p)?;
        if uniforms.dims != dims || uniforms.mode != mode {
            return Err(invalid("uniforms", "drawn for a different lattice or mode"));
        }
        let open = uniforms.values.iter().map(|&u| u < p).collect();
        Ok(Self { dims, p, mode, open })
    }

    /// Directly specified bond states, indexed `site * 3 + axis` (x, y, z).
    pub fn from_bonds(dims: Dims, p: f64, mut open: Vec<bool>) -> Result<Self> {
        if open.len() != 3 * dims.volume() {
            return Err(invalid("open_bonds", format!("expected {} entries", 3 * dims.volume())));
        }
        for site in 0..dims.volume() {
            for axis in Axis::ALL {
                if forward(dims, BOUNDARY, site, axis).is_none() {
                    open[site * 3 + axis_slot(axis)] = false;
                }
            }
        }
        Ok(Self { dims, p, mode: Mode::Bond, open })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n_sites(&self) -> usize {
        self.dims.volume()
    }

    /// Number of bonds of the open lattice (bond mode) or sites (site mode).
    pub fn element_count(&self) -> usize {
        element_count(self.dims, self.mode)
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&b| b).count()
    }

    /// Raw element `k` (`site * 3 + axis` in bond mode, `site` in site mode).
    pub fn is_open(&self, k: usize) -> bool {
        self.open[k]
    }

    pub fn bond_open(&self, site: usize, axis: Axis) -> bool {
        self.mode == Mode::Bond && self.open[site * 3 + axis_slot(axis)]
    }

    pub fn site_occupied(&self, site: usize) -> bool {
        match self.mode {
            Mode::Bond => true,
            Mode::Site => self.open[site],
        }
    }

    /// Cluster partition of the configuration. In site mode empty sites are
    /// left unlabeled.
    pub fn partition(&self) -> ClusterPartition {
        let lattice = Lattice3D::filled(self.dims, BOUNDARY, ());
        let (lx, lxy) = (self.dims.lx, self.dims.lx * self.dims.ly);
        let ly = self.dims.ly;
        match self.mode {
            Mode::Bond => label_clusters(&lattice, |i, j| {
                let (lo, hi) = (i.min(j), i.max(j));
                let axis = if lx > 1 && hi == lo + 1 {
                    Axis::X
                } else if ly > 1 && hi == lo + lx {
                    Axis::Y
                } else {
                    debug_assert_eq!(hi, lo + lxy);
                    Axis::Z
                };
                self.open[lo * 3 + axis_slot(axis)]
            }),
            Mode::Site => label_clusters_where(&lattice, |i| self.open[i], |_, _| true),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn element_count(dims: Dims, mode: Mode) -> usize {
    match mode {
        Mode::Site => dims.volume(),
        Mode::Bond => {
            let Dims { lx, ly, lz } = dims;
            (lx - 1) * ly * lz + lx * (ly - 1) * lz + lx * ly * (lz - 1)
        }
    }
}

/// One uniform deviate per bond (or site), in a fixed order.
#[derive(Clone, Debug)]
pub struct Uniforms {
    dims: Dims,
    mode: Mode,
    values: Vec<f64>,
}

impl Uniforms {
    pub fn draw(dims: Dims, mode: Mode, rng: &mut RngStream) -> Self {
        let values = match mode {
            Mode::Site => (0..dims.volume()).map(|_| rng.uniform()).collect(),
            Mode::Bond => {
                let mut v = vec![1.0; 3 * dims.volume()];
                for site in 0..dims.volume() {
                    for axis in Axis::ALL {
                        if forward(dims, BOUNDARY, site, axis).is_some() {
                            v[site * 3 + axis_slot(axis)] = rng.uniform();
                        }
                    }
                }
                v
            }
        };
        Self { dims, mode, values }
    }
}

/// Samples a configuration: every bond (site) open independently with probability `p`.
pub fn sample_config(dims: Dims, p: f64, mode: Mode, rng: &mut RngStream) -> Result<BondConfig> {
    check_p(p)?;
    let u = Uniforms::draw(dims, mode, rng);
    BondConfig::from_uniforms(dims, p, mode, &u)
}

/// Id of a cluster touching both the `x = 0` and `x = Lx - 1` faces, if any.
/// With several candidates the largest (then smallest id) is returned.
pub fn spanning_cluster(config: &BondConfig) -> Option<usize> {
    spanning_in(config, &config.partition())
}

fn spanning_in(config: &BondConfig, part: &ClusterPartition) -> Option<usize> {
    let d = config.dims();
    let mut left = std::collections::BTreeSet::new();
    for z in 0..d.lz {
        for y in 0..d.ly {
            if let Some(l) = part.label(d.index(0, y, z)) {
                left.insert(l);
            }
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for z in 0..d.lz {
        for y in 0..d.ly {
            if let Some(l) = part.label(d.index(d.lx - 1, y, z)) {
                if left.contains(&l) {
                    let s = part.size_of(l).unwrap_or(0);
                    if best.is_none_or(|(bl, bs)| s > bs || (s == bs && l < bl)) {
                        best = Some((l, s));
                    }
                }
            }
        }
    }
    best.map(|(l, _)| l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PercoStats {
    /// Cluster size → finite clusters of that size per lattice site.
    pub n_s: BTreeMap<usize, f64>,
    /// Fraction of sites in the spanning cluster.
    pub p_inf: f64,
    /// `S = sum_s s^2 n_s`.
    pub second_moment: f64,
    pub spanning: bool,
    pub spanning_size: usize,
    pub largest: usize,
    pub n_sites: usize,
    /// Raw cluster counts behind `n_s`.
    pub counts: BTreeMap<usize, usize>,
}

impl PercoStats {
    /// Sum of `s * count_s` over the clusters kept in `n_s`.
    pub fn counted_mass(&self) -> usize {
        self.counts.iter().map(|(s, c)| s * c).sum()
    }
}

pub fn compute_stats(config: &BondConfig, exclude_spanning: bool) -> PercoStats {
    let part = config.partition();
    stats_from_partition(config, &part, exclude_spanning)
}

fn stats_from_partition(config: &BondConfig, part: &ClusterPartition, exclude_spanning: bool) -> PercoStats {
    let n_sites = config.n_sites();
    let span = spanning_in(config, part);
    let spanning_size = span.and_then(|l| part.size_of(l)).unwrap_or(0);
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (&id, &s) in part.cluster_sizes() {
        if exclude_spanning && Some(id) == span {
            continue;
        }
        *counts.entry(s).or_insert(0) += 1;
    }
    let nf = n_sites as f64;
    let n_s: BTreeMap<usize, f64> = counts.iter().map(|(&s, &c)| (s, c as f64 / nf)).collect();
    let second_moment = counts.iter().map(|(&s, &c)| (s * s) as f64 * c as f64).sum::<f64>() / nf;
    PercoStats {
        n_s,
        p_inf: spanning_size as f64 / nf,
        second_moment,
        spanning: span.is_some(),
        spanning_size,
        largest: part.largest().map(|(_, s)| s).unwrap_or(0),
        n_sites,
        counts,
    }
}

/// Event view of a configuration: finite cluster sizes, normalized per site.
pub fn to_event(config: &BondConfig, stats: &PercoStats) -> Result<EventRecord> {
    let mut sizes: Vec<usize> = Vec::new();
    for (&s, &c) in stats.counts.iter().rev() {
        sizes.extend(std::iter::repeat_n(s, c));
    }
    EventRecord::new(sizes, Some(config.p()))?.with_system_size(config.n_sites())
}

/// Monte Carlo estimate at one `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRow {
    pub p: f64,
    pub spanning_prob: f64,
    pub spanning_prob_se: f64,
    pub p_inf: f64,
    pub p_inf_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    /// Mean largest-cluster fraction.
    pub largest_fraction: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdScan {
    pub dims: Dims,
    pub mode: Mode,
    pub rows: Vec<ScanRow>,
    /// Interpolated `p` where the spanning probability crosses 1/2.
    pub p_c: Option<f64>,
}

/// Spanning probability, `P_inf` and `S` (spanning cluster excluded) on a grid
/// of `p`. Sample `i` at every `p` uses stream `i` of `seed`, so the samples are
/// coupled across the grid.
pub fn threshold_scan(dims: Dims, p_grid: &[f64], n_samples: usize, seed: u64, mode: Mode) -> Result<ThresholdScan> {
    if n_samples == 0 {
        return Err(invalid("n_samples", "need at least one sample"));
    }
    for &p in p_grid {
        check_p(p)?;
    }
    if p_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("p_grid", "must be sorted ascending"));
    }
    // per sample: one uniform set reused for every p
    let per_sample: Vec<Vec<(bool, f64, f64, f64)>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let u = Uniforms::draw(dims, mode, &mut rng);
            p_grid
                .iter()
                .map(|&p| {
                    let cfg = BondConfig::from_uniforms(dims, p, mode, &u).expect("validated p");
                    let st = compute_stats(&cfg, true);
                    (
                        st.spanning,
                        st.p_inf,
                        st.second_moment,
                        st.largest as f64 / st.n_sites as f64,
                    )
                })
                .collect()
        })
        .collect();

    let rows: Vec<ScanRow> = p_grid
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let col = per_sample.iter().map(|s| s[k]);
            let span = mean_se(col.clone().map(|r| if r.0 { 1.0 } else { 0.0 }));
            let pinf = mean_se(col.clone().map(|r| r.1));
            let sm = mean_se(col.clone().map(|r| r.2));
            let big = mean_se(col.map(|r| r.3));
            ScanRow {
                p,
                spanning_prob: span.0,
                spanning_prob_se: span.1,
                p_inf: pinf.0,
                p_inf_se: pinf.1,
                second_moment: sm.0,
                second_moment_se: sm.1,
                largest_fraction: big.0,
                n_samples,
            }
        })
        .collect();
    let p_c = crossing(&rows);
    Ok(ThresholdScan { dims, mode, rows, p_c })
}

fn crossing(rows: &[ScanRow]) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.spanning_prob < 0.5 && b.spanning_prob >= 0.5 {
            let t = (0.5 - a.spanning_prob) / (b.spanning_prob - a.spanning_prob);
            Some(a.p + t * (b.p - a.p))
        } else {
            None
        }
    })
}

/// Evenly spaced grid with `steps` points from `min` to `max` inclusive.
pub fn linear_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![min],
        n => (0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::oracle::flood_fill;

    fn dims(l: usize) -> Dims {
        Dims::cube(l).unwrap()
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = RngStream::new(1, 0);
        let c0 = sample_config(dims(5), 0.0, Mode::Bond, &mut rng).unwrap();
        assert_eq!(c0.open_count(), 0);
        let c1 = sample_config(dims(5), 1.0, Mode::Bond, &mut rng).unwrap();
        assert_eq!(c1.open_count(), c1.element_count());
        assert_eq!(c1.element_count(), 3 * 4 * 25);
        assert!(sample_config(dims(5), 1.1, Mode::Bond, &mut rng).is_err());
        assert!(sample_config(dims(5), -0.1, Mode::Bond, &mut rng).is_err());
    }

    #[test]
    fn open_fraction_binomial() {
        // 48*48*16 lattice has just over 10^5 bonds
        let d = Dims::new(48, 48, 16).unwrap();
        let mut rng = RngStream::new(2, 0);
        let c = sample_config(d, 0.5, Mode::Bond, &mut rng).unwrap();
        let n = c.element_count() as f64;
        assert!(n > 1e5);
        let z = (c.open_count() as f64 - 0.5 * n) / (0.25 * n).sqrt();
        assert!(z.abs() < 5.0, "z = {z}");
    }

    #[test]
    fn same_stream_same_config() {
        let a = sample_config(dims(6), 0.4, Mode::Bond, &mut RngStream::new(9, 3)).unwrap();
        let b = sample_config(dims(6), 0.4, Mode::Bond, &mut RngStream::new(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spanning_cases() {
        let mut rng = RngStream::new(3, 0);
        let full = sample_config(dims(4), 1.0, Mode::Bond, &mut rng).unwrap();
        assert!(spanning_cluster(&full).is_some());
        let empty = sample_config(dims(4), 0.0, Mode::Bond, &mut rng).unwrap();
        assert!(spanning_cluster(&empty).is_none());

        let d = dims(4);
        let mut open = vec![false; 3 * d.volume()];
        for x in 0..3 {
            open[d.index(x, 2, 1) * 3] = true;
        }
        let chain = BondConfig::from_bonds(d, 0.0, open).unwrap();
        let id = spanning_cluster(&chain).unwrap();
        assert_eq!(chain.partition().size_of(id), Some(4));
    }

    #[test]
    fn boundary_bonds_never_open() {
        let d = dims(3);
        let c = BondConfig::from_bonds(d, 1.0, vec![true; 27 * 3]).unwrap();
        assert_eq!(c.open_count(), c.element_count());
    }

    #[test]
    fn stats_at_extremes() {
        let mut rng = RngStream::new(4, 0);
        let s0 = compute_stats(&sample_config(dims(6), 0.0, Mode::Bond, &mut rng).unwrap(), true);
        assert_eq!(s0.n_s.len(), 1);
        assert_eq!(s0.n_s[&1], 1.0);
        assert_eq!(s0.p_inf, 0.0);
        assert_eq!(s0.second_moment, 1.0);
        let s1 = compute_stats(&sample_config(dims(6), 1.0, Mode::Bond, &mut rng).unwrap(), true);
        assert_eq!(s1.p_inf, 1.0);
        assert!(s1.n_s.is_empty());
        assert_eq!(s1.second_moment, 0.0);
    }

    #[test]
    fn stats_match_flood_fill_oracle() {
        let d = dims(16);
        let lattice = Lattice3D::filled(d, Boundary::Open, ());
        for i in 0..200u64 {
            let cfg = sample_config(d, 0.30, Mode::Bond, &mut RngStream::new(77, i)).unwrap();
            let st = compute_stats(&cfg, true);
            // oracle: flood fill over open bonds, then faces and counts by hand
            let labels = flood_fill(&lattice, |_| true, |a, b| {
                let (lo, hi) = (a.min(b), a.max(b));
                let (x0, y0, z0) = d.coords(lo);
                let (x1, y1, z1) = d.coords(hi);
                let axis = if x1 != x0 { Axis::X } else if y1 != y0 { Axis::Y } else { assert_ne!(z1, z0); Axis::Z };
                cfg.bond_open(lo, axis)
            });
            let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
            for l in labels.iter().flatten() {
                *sizes.entry(*l).or_insert(0) += 1;
            }
            let left: std::collections::BTreeSet<usize> = (0..d.volume())
                .filter(|&s| d.coords(s).0 == 0)
                .map(|s| labels[s].unwrap())
                .collect();
            let spanning: Vec<usize> = (0..d.volume())
                .filter(|&s| d.coords(s).0 == d.lx - 1)
                .map(|s| labels[s].unwrap())
                .filter(|l| left.contains(l))
                .collect();
            let span_label = spanning.iter().copied().max_by_key(|l| (sizes[l], std::cmp::Reverse(*l)));
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for (l, &s) in &sizes {
                if Some(*l) != span_label {
                    *counts.entry(s).or_insert(0) += 1;
                }
            }
            assert_eq!(st.counts, counts, "config {i}");
            assert_eq!(st.spanning, span_label.is_some());
            assert_eq!(st.spanning_size, span_label.map(|l| sizes[&l]).unwrap_or(0));
            assert_eq!(st.counted_mass() + st.spanning_size, d.volume());
        }
    }

    #[test]
    fn exclusion_is_noop_without_spanning_cluster() {
        for i in 0..50u64 {
            let cfg = sample_config(dims(10), 0.1, Mode::Bond, &mut RngStream::new(5, i)).unwrap();
            let a = compute_stats(&cfg, true);
            let b = compute_stats(&cfg, false);
            assert!(!a.spanning);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn site_mode_mass_counts_occupied_sites() {
        let cfg = sample_config(dims(8), 0.4, Mode::Site, &mut RngStream::new(6, 0)).unwrap();
        let st = compute_stats(&cfg, false);
        assert_eq!(st.counted_mass(), cfg.open_count());
        let full = sample_config(dims(4), 1.0, Mode::Site, &mut RngStream::new(6, 0)).unwrap();
        assert_eq!(compute_stats(&full, true).p_inf, 1.0);
    }

    #[test]
    fn scan_endpoints() {
        let s = threshold_scan(dims(6), &[0.0, 1.0], 10, 1, Mode::Bond).unwrap();
        assert_eq!(s.rows[0].spanning_prob, 0.0);
        assert_eq!(s.rows[1].spanning_prob, 1.0);
        assert_eq!(s.p_c, Some(0.5));
        assert!(threshold_scan(dims(6), &[0.2], 0, 1, Mode::Bond).is_err());
        assert!(threshold_scan(dims(6), &[0.3, 0.2], 3, 1, Mode::Bond).is_err());
    }

    #[test]
    fn monotone_coupling() {
        let d = dims(10);
        let grid = linear_grid(0.1, 0.5, 21);
        for i in 0..30u64 {
            let u = Uniforms::draw(d, Mode::Bond, &mut RngStream::new(8, i));
            let mut prev = (false, 0usize);
            for &p in &grid {
                let st = compute_stats(&BondConfig::from_uniforms(d, p, Mode::Bond, &u).unwrap(), true);
                assert!(st.spanning >= prev.0 && st.largest >= prev.1);
                prev = (st.spanning, st.largest);
            }
        }
    }
}
