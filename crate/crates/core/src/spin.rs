//! Spin-1 lattice model with single-site heat-bath dynamics.
//!
//! `E = -J sum_<ij> S_i S_j - h sum_i S_i`, `S_i in {-1, 0, +1}`. A move picks a
//! site and one of the two other spin values uniformly, and accepts it with
//! probability `1 / (1 + exp(dE / T))`.

use rayon::prelude::*;

use crate::cluster::{label_clusters_where, ClusterPartition};
use crate::error::{invalid, Result};
use crate::events::EventRecord;
use crate::exponent::mean_se;
use crate::lattice::{Boundary, Dims, Lattice3D};
use crate::rng::RngStream;

/// Maps the candidate draw to a spin value. `Mirrored` applied to the negated
/// configuration proposes exactly the negated candidates of `Direct`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CandidateMap {
    #[default]
    Direct,
    Mirrored,
}

/// The two spin values other than `s`, ascending.
fn others(s: i8) -> [i8; 2] {
    match s {
        -1 => [0, 1],
        0 => [-1, 1],
        _ => [-1, 0],
    }
}

/// Acceptance probability of a move costing `de` at temperature `t`.
#[inline]
pub fn acceptance(de: f64, t: f64) -> f64 {
    let x = de / t;
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinLattice {
    lattice: Lattice3D<i8>,
    pub j: f64,
    pub h: f64,
    pub t: f64,
    pub candidates: CandidateMap,
    // CSR neighbor table
    nbr_start: Vec<u32>,
    nbr: Vec<u32>,
}

impl SpinLattice {
    pub fn new(lattice: Lattice3D<i8>, j: f64, h: f64, t: f64) -> Result<Self> {
        if lattice.sites().iter().any(|s| !(-1..=1).contains(s)) {
            return Err(invalid("spins", "every spin must be -1, 0 or +1"));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(invalid("T", format!("temperature must be positive, got {t}")));
        }
        if !j.is_finite() || !h.is_finite() {
            return Err(invalid("J/h", "couplings must be finite"));
        }
        let d = lattice.dims();
        if lattice.boundary() == Boundary::Periodic && (d.lx == 1 || d.ly == 1 || d.lz == 1) {
            return Err(invalid("dims", "periodic axes need extent >= 2"));
        }
        let mut nbr_start = Vec::with_capacity(lattice.len() + 1);
        let mut nbr = Vec::with_capacity(lattice.len() * 6);
        nbr_start.push(0);
        for site in 0..lattice.len() {
            lattice.for_each_neighbor(site, |n| nbr.push(n as u32));
            nbr_start.push(nbr.len() as u32);
        }
        Ok(Self { lattice, j, h, t, candidates: CandidateMap::Direct, nbr_start, nbr })
    }

    /// Periodic cube with every spin set to `spin`.
    pub fn uniform(dims: Dims, spin: i8, j: f64, h: f64, t: f64) -> Result<Self> {
        Self::new(Lattice3D::filled(dims, Boundary::Periodic, spin), j, h, t)
    }

    /// Periodic lattice with independent uniform spins.
    pub fn random(dims: Dims, j: f64, h: f64, t: f64, rng: &mut RngStream) -> Result<Self> {
        let sites = (0..dims.volume()).map(|_| rng.below(3) as i8 - 1).collect();
        Self::new(Lattice3D::from_sites(dims, Boundary::Periodic, sites)?, j, h, t)
    }

    pub fn lattice(&self) -> &Lattice3D<i8> {
        &self.lattice
    }

    pub fn spins(&self) -> &[i8] {
        self.lattice.sites()
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.len()
    }

    pub fn set_spin(&mut self, site: usize, spin: i8) {
        assert!((-1..=1).contains(&spin), "spin {spin} out of range");
        self.lattice.set(site, spin);
    }

    pub fn magnetization(&self) -> i64 {
        self.spins().iter().map(|&s| i64::from(s)).sum()
    }

    /// Copy with all spins negated and the field reversed.
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        for s in m.lattice.sites_mut() {
            *s = -*s;
        }
        m.h = -m.h;
        m.candidates = match self.candidates {
            CandidateMap::Direct => CandidateMap::Mirrored,
            CandidateMap::Mirrored => CandidateMap::Direct,
        };
        m
    }

    #[inline]
    fn local_field_sum(&self, site: usize) -> i32 {
        let s = self.spins();
        self.nbr[self.nbr_start[site] as usize..self.nbr_start[site + 1] as usize]
            .iter()
            .map(|&n| i32::from(s[n as usize]))
            .sum()
    }
}

/// `-J sum_<ij> S_i S_j - h sum_i S_i` with every bond counted once.
pub fn total_energy(lat: &SpinLattice) -> f64 {
    let s = lat.spins();
    let mut bonds = 0i64;
    lat.lattice.for_each_bond(|a, b| bonds += i64::from(s[a]) * i64::from(s[b]));
    -lat.j * bonds as f64 - lat.h * lat.magnetization() as f64
}

/// Energy change of setting `site` to `new_spin`.
pub fn delta_energy(lat: &SpinLattice, site: usize, new_spin: i8) -> f64 {
    let ds = f64::from(new_spin - lat.spins()[site]);
    ds * (-lat.j * f64::from(lat.local_field_sum(site)) - lat.h)
}

/// One proposal. Always consumes three draws (site, candidate, uniform).
pub fn heat_bath_step(lat: &mut SpinLattice, rng: &mut RngStream) -> bool {
    let site = rng.below(lat.n_sites());
    let k = rng.below(2);
    let u = rng.uniform();
    let old = lat.spins()[site];
    let pick = match lat.candidates {
        CandidateMap::Direct => k,
        CandidateMap::Mirrored => 1 - k,
    };
    let new = others(old)[pick];
    let de = delta_energy(lat, site, new);
    if u < acceptance(de, lat.t) {
        lat.lattice.set(site, new);
        true
    } else {
        false
    }
}

/// `N` proposals; returns the accepted fraction.
pub fn sweep(lat: &mut SpinLattice, rng: &mut RngStream) -> f64 {
    let n = lat.n_sites();
    let accepted = (0..n).filter(|_| heat_bath_step(lat, rng)).count();
    accepted as f64 / n as f64
}

/// Clusters of nearest neighbors carrying the same nonzero spin.
pub fn domain_clusters(lat: &SpinLattice) -> ClusterPartition {
    let s = lat.spins();
    label_clusters_where(&lat.lattice, |i| s[i] != 0, |a, b| s[a] == s[b])
}

pub const DEFAULT_DISCARD: usize = 1_000;
pub const DEFAULT_MEASURE: usize = 10_000;
pub const BLOCKS: usize = 20;

/// Equilibrium estimates at one temperature. Magnetization statistics use
/// `|M|`, so the susceptibility is `(<M^2> - <|M|>^2) / (N T)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermoSample {
    pub t: f64,
    pub mean_magnetization: f64,
    pub mag_se: f64,
    pub susceptibility: f64,
    pub chi_se: f64,
    pub energy_per_site: f64,
    pub accept_rate: f64,
    /// Mean largest-domain fraction.
    pub largest_domain: f64,
    pub largest_domain_se: f64,
    pub n_sweeps_measured: usize,
    pub n_sweeps_discarded: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanConfig {
    pub dims: Dims,
    pub j: f64,
    pub h: f64,
    pub discard: usize,
    pub measure: usize,
    /// Sweeps between largest-domain measurements (0 disables them).
    pub domain_every: usize,
}

impl ScanConfig {
    pub fn new(dims: Dims) -> Self {
        Self { dims, j: 1.0, h: 0.0, discard: DEFAULT_DISCARD, measure: DEFAULT_MEASURE, domain_every: 0 }
    }
}

fn block_se(series: &[f64]) -> f64 {
    let b = series.len() / BLOCKS;
    if b == 0 {
        return 0.0;
    }
    mean_se((0..BLOCKS).map(|k| series[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)).1
}

/// Runs one temperature from an all-+1 start.
pub fn thermo_sample(cfg: &ScanConfig, t: f64, rng: &mut RngStream) -> Result<ThermoSample> {
    if cfg.measure < BLOCKS {
        return Err(invalid("measure", format!("need at least {BLOCKS} measured sweeps")));
    }
    let mut lat = SpinLattice::uniform(cfg.dims, 1, cfg.j, cfg.h, t)?;
    let n = lat.n_sites() as f64;
    for _ in 0..cfg.discard {
        sweep(&mut lat, rng);
    }
    let mut m_abs = Vec::with_capacity(cfg.measure);
    let mut m2 = Vec::with_capacity(cfg.measure);
    let mut energy = 0.0;
    let mut acc = 0.0;
    let mut domains = Vec::new();
    for k in 0..cfg.measure {
        acc += sweep(&mut lat, rng);
        let m = lat.magnetization() as f64 / n;
        m_abs.push(m.abs());
        m2.push(m * m);
        energy += total_energy(&lat) / n;
        if cfg.domain_every > 0 && (k + 1) % cfg.domain_every == 0 {
            let p = domain_clusters(&lat);
            domains.push(p.largest().map_or(0, |(_, a)| a) as f64 / n);
        }
    }
    let count = cfg.measure as f64;
    let mean_abs = m_abs.iter().sum::<f64>() / count;
    let chi_of = |a: &[f64], b: &[f64]| {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        (n * (mb - ma * ma) / t).max(0.0)
    };
    let b = cfg.measure / BLOCKS;
    let chi_blocks: Vec<f64> = (0..BLOCKS).map(|k| chi_of(&m_abs[k * b..(k + 1) * b], &m2[k * b..(k + 1) * b])).collect();
    let (ld, ld_se) = if domains.is_empty() { (0.0, 0.0) } else { (mean_se(domains.iter().copied()).0, block_se(&domains)) };
    Ok(ThermoSample {
        t,
        mean_magnetization: mean_abs,
        mag_se: block_se(&m_abs),
        susceptibility: chi_of(&m_abs, &m2),
        chi_se: mean_se(chi_blocks).1,
        energy_per_site: energy / count,
        accept_rate: acc / count,
        largest_domain: ld,
        largest_domain_se: ld_se,
        n_sweeps_measured: cfg.measure,
        n_sweeps_discarded: cfg.discard,
    })
}

/// One sample per temperature; temperature `i` uses stream `i`.
pub fn susceptibility_scan(cfg: &ScanConfig, t_grid: &[f64], seed: u64) -> Result<Vec<ThermoSample>> {
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0)) {
        return Err(invalid("T", format!("temperatures must be positive, got {t}")));
    }
    t_grid
        .par_iter()
        .enumerate()
        .map(|(i, &t)| thermo_sample(cfg, t, &mut RngStream::new(seed, i as u64)))
        .collect()
}

/// Temperature of the largest susceptibility.
pub fn peak_temperature(samples: &[ThermoSample]) -> Option<f64> {
    samples
        .iter()
        .max_by(|a, b| a.susceptibility.total_cmp(&b.susceptibility))
        .map(|s| s.t)
}

/// Domain-size events at temperature `t`: `replicas` independent lattices,
/// each equilibrated for `discard` sweeps and then sampled every `every`
/// sweeps, `snapshots` times. Replica `r` uses stream `r`.
pub fn domain_events(
    cfg: &ScanConfig,
    t: f64,
    replicas: usize,
    snapshots: usize,
    every: usize,
    seed: u64,
) -> Result<Vec<EventRecord>> {
    let per: Vec<Vec<EventRecord>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r as u64);
            let mut lat = SpinLattice::uniform(cfg.dims, 1, cfg.j, cfg.h, t)?;
            for _ in 0..cfg.discard {
                sweep(&mut lat, &mut rng);
            }
            let mut out = Vec::with_capacity(snapshots);
            for _ in 0..snapshots {
                for _ in 0..every.max(1) {
                    sweep(&mut lat, &mut rng);
                }
                let sizes = domain_clusters(&lat).sizes_descending();
                out.push(EventRecord::new(sizes, Some(t))?.with_system_size(lat.n_sites())?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}
