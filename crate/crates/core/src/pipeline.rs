//! End-to-end protocols: simulate, locate the critical regime, fit τ.
//!
//! Each protocol has fixed `smoke` and `desk` presets. Everything is seeded, so
//! a protocol run is a pure function of its config and seed.

use rayon::prelude::*;

use crate::ecra::{anneal, fragment_sizes, AnnealSchedule};
use crate::error::{invalid, Error, Result};
use crate::events::EventRecord;
use crate::exponent::{
    extract_beta, extract_gamma, fit_tau, sigma_from_beta_gamma, tau_from_beta_gamma, ExponentEstimate, FitRange,
    PowerLawFit, ScalingWindow, Side, SizeHistogram, TauGrid,
};
use crate::hiv::{cluster_events, default_max_steps, locate_critical, Selection};
use crate::lattice::Dims;
use crate::md::{collide, prepare_droplet, CollisionConfig, DropletConfig, PairPotential};
use crate::percolation::{compute_stats, linear_grid, threshold_scan, to_event, BondConfig, Mode, ThresholdScan, Uniforms};
use crate::rng::RngStream;
use crate::spin::{domain_events, peak_temperature, susceptibility_scan, ScanConfig, ThermoSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Smoke,
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Scale::Smoke),
            "desk" => Ok(Scale::Desk),
            other => Err(invalid("scale", format!("expected smoke|desk, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Smoke => "smoke",
            Scale::Desk => "desk",
        })
    }
}

/// `key = value` lines describing a resolved protocol.
pub trait Describe {
    fn describe(&self) -> Vec<(String, String)>;
}

macro_rules! describe_fields {
    ($ty:ty, $prefix:literal, $($field:ident),+) => {
        impl Describe for $ty {
            fn describe(&self) -> Vec<(String, String)> {
                vec![$((format!("{}.{}", $prefix, stringify!($field)), format!("{:?}", self.$field))),+]
            }
        }
    };
}

// ---------------------------------------------------------------- percolation

#[derive(Clone, Debug, PartialEq)]
pub struct PercolationProtocol {
    pub l: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub p_steps: usize,
    pub scan_samples: usize,
    /// Configurations sampled at the estimated threshold for the τ fit.
    pub tau_samples: usize,
    pub eps_min: f64,
    pub eps_max: f64,
}

describe_fields!(PercolationProtocol, "percolation", l, p_min, p_max, p_steps, scan_samples, tau_samples, eps_min, eps_max);

impl PercolationProtocol {
    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Smoke => Self { l: 12, p_min: 0.12, p_max: 0.38, p_steps: 27, scan_samples: 40, tau_samples: 300, eps_min: 0.1, eps_max: 0.5 },
            Scale::Desk => Self { l: 32, p_min: 0.12, p_max: 0.38, p_steps: 53, scan_samples: 200, tau_samples: 2000, eps_min: 0.1, eps_max: 0.5 },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PercolationReport {
    pub scan: ThresholdScan,
    pub p_c: f64,
    pub fit: PowerLawFit,
    pub gamma: ExponentEstimate,
    pub beta: ExponentEstimate,
    pub tau_relation: f64,
    pub sigma: f64,
    /// Configurations at `p_c` whose cluster masses did not add up to the lattice.
    pub mass_violations: usize,
    /// Coupled pairs (`p_c` and a higher `p`) where an open bond closed or the
    /// largest cluster shrank.
    pub coupling_violations: usize,
    pub events: Vec<EventRecord>,
}

pub fn run_percolation(proto: &PercolationProtocol, seed: u64) -> Result<PercolationReport> {
    let dims = Dims::cube(proto.l)?;
    let grid = linear_grid(proto.p_min, proto.p_max, proto.p_steps);
    let scan = threshold_scan(dims, &grid, proto.scan_samples, seed, Mode::Bond)?;
    let p_c = scan.p_c.ok_or_else(|| Error::Fit("spanning probability never crosses 1/2 on the grid".into()))?;
    let m2: Vec<(f64, f64)> = scan.rows.iter().map(|r| (r.p, r.second_moment)).collect();
    let big: Vec<(f64, f64)> = scan.rows.iter().map(|r| (r.p, r.largest_fraction)).collect();
    let gamma = extract_gamma(&m2, p_c, ScalingWindow::new(Side::Below, proto.eps_min, proto.eps_max)?)?;
    let beta = extract_beta(&big, p_c, ScalingWindow::new(Side::Above, proto.eps_min, proto.eps_max)?)?;
    let p_hi = (p_c * 1.1).min(1.0);
    let per: Vec<(EventRecord, bool, bool)> = (0..proto.tau_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, (1 << 32) + i as u64);
            let u = Uniforms::draw(dims, Mode::Bond, &mut rng);
            let lo = BondConfig::from_uniforms(dims, p_c, Mode::Bond, &u)?;
            let hi = BondConfig::from_uniforms(dims, p_hi, Mode::Bond, &u)?;
            let st = compute_stats(&lo, true);
            let mass_ok = st.counted_mass() + st.spanning_size == st.n_sites;
            let st_hi = compute_stats(&hi, false);
            let nested = (0..lo.element_count()).all(|k| !lo.is_open(k) || hi.is_open(k));
            let coupled = nested && st_hi.largest >= st.largest;
            Ok((to_event(&lo, &st)?, mass_ok, coupled))
        })
        .collect::<Result<_>>()?;
    let mass_violations = per.iter().filter(|r| !r.1).count();
    let coupling_violations = per.iter().filter(|r| !r.2).count();
    let events: Vec<EventRecord> = per.into_iter().map(|r| r.0).collect();
    let hist = SizeHistogram::from_events(&events);
    let fit = fit_tau(&hist, FitRange::new(2, proto.l)?, TauGrid::default())?;
    let tau_relation = tau_from_beta_gamma(beta.value, gamma.value)?;
    let sigma = sigma_from_beta_gamma(beta.value, gamma.value)?;
    Ok(PercolationReport { scan, p_c, fit, gamma, beta, tau_relation, sigma, mass_violations, coupling_violations, events })
}

// ------------------------------------------------------------------------ hiv

#[derive(Clone, Debug, PartialEq)]
pub struct HivProtocol {
    pub n: u32,
    pub q_is: f64,
    pub q_vs_min: f64,
    pub q_vs_max: f64,
    pub q_vs_steps: usize,
    pub scan_runs: usize,
    pub peak_runs: usize,
    pub max_steps: u64,
    pub selection: Selection,
}

describe_fields!(HivProtocol, "hiv", n, q_is, q_vs_min, q_vs_max, q_vs_steps, scan_runs, peak_runs, max_steps, selection);

impl HivProtocol {
    pub fn preset(scale: Scale) -> Self {
        let (n, scan_runs, peak_runs) = match scale {
            Scale::Smoke => (12, 30, 300),
            Scale::Desk => (12, 100, 1000),
        };
        Self {
            n,
            q_is: 0.3,
            q_vs_min: 0.6,
            q_vs_max: 1.0,
            q_vs_steps: 21,
            scan_runs,
            peak_runs,
            max_steps: default_max_steps(n),
            selection: Selection::Branch,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HivReport {
    pub q_vs: f64,
    pub fit: PowerLawFit,
    pub events: Vec<EventRecord>,
}

pub fn run_hiv(proto: &HivProtocol, seed: u64) -> Result<HivReport> {
    let grid = linear_grid(proto.q_vs_min, proto.q_vs_max, proto.q_vs_steps);
    let scan = locate_critical(proto.n, &grid, proto.q_is, proto.scan_runs, proto.max_steps, proto.selection, seed)?;
    let base = (grid.len() * proto.scan_runs) as u64;
    let events = cluster_events(proto.n, scan.q_vs, proto.q_is, proto.peak_runs, proto.max_steps, proto.selection, seed, base)?;
    let hist = SizeHistogram::from_events(&events);
    let fit = fit_tau(&hist, FitRange::default_for(1 << proto.n), TauGrid::default())?;
    Ok(HivReport { q_vs: scan.q_vs, fit, events })
}

// ----------------------------------------------------------------------- spin

#[derive(Clone, Debug, PartialEq)]
pub struct SpinProtocol {
    pub l: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub t_steps: usize,
    pub discard: usize,
    pub measure: usize,
    pub domain_every: usize,
    pub replicas: usize,
    pub snapshots: usize,
    pub eps_min: f64,
    pub eps_max: f64,
}

describe_fields!(SpinProtocol, "spin", l, t_min, t_max, t_steps, discard, measure, domain_every, replicas, snapshots, eps_min, eps_max);

impl SpinProtocol {
    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Smoke => Self {
                l: 6,
                t_min: 2.0,
                t_max: 6.0,
                t_steps: 21,
                discard: 100,
                measure: 400,
                domain_every: 10,
                replicas: 4,
                snapshots: 50,
                eps_min: 0.01,
                eps_max: 0.32,
            },
            Scale::Desk => Self {
                l: 12,
                t_min: 2.0,
                t_max: 6.0,
                t_steps: 41,
                discard: 1000,
                measure: 10_000,
                domain_every: 10,
                replicas: 16,
                snapshots: 100,
                eps_min: 0.01,
                eps_max: 0.32,
            },
        }
    }

    fn scan_config(&self) -> Result<ScanConfig> {
        let mut cfg = ScanConfig::new(Dims::cube(self.l)?);
        cfg.discard = self.discard;
        cfg.measure = self.measure;
        cfg.domain_every = self.domain_every;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinReport {
    pub samples: Vec<ThermoSample>,
    pub t_peak: f64,
    /// Significant local maxima of χ strictly inside the scan.
    pub interior_peaks: usize,
    pub fit: PowerLawFit,
    /// From the largest-domain fraction below the peak.
    pub beta: Result<ExponentEstimate>,
    /// Same window, fitted on `<|M|>`.
    pub beta_magnetization: Result<ExponentEstimate>,
    pub events: Vec<EventRecord>,
}

/// Interior points of a sampled curve `(value, se)` that exceed both
/// neighbours by more than two combined standard errors.
pub fn significant_maxima(points: &[(f64, f64)]) -> Vec<usize> {
    let above = |i: usize, j: usize| {
        let (a, b) = (points[i], points[j]);
        a.0 - b.0 > 2.0 * (a.1 * a.1 + b.1 * b.1).sqrt()
    };
    (1..points.len().saturating_sub(1)).filter(|&i| above(i, i - 1) && above(i, i + 1)).collect()
}

pub fn run_spin(proto: &SpinProtocol, seed: u64) -> Result<SpinReport> {
    let cfg = proto.scan_config()?;
    let grid = linear_grid(proto.t_min, proto.t_max, proto.t_steps);
    let samples = susceptibility_scan(&cfg, &grid, seed)?;
    let t_peak = peak_temperature(&samples).ok_or_else(|| invalid("t_grid", "empty temperature grid"))?;
    let chi: Vec<(f64, f64)> = samples.iter().map(|s| (s.susceptibility, s.chi_se)).collect();
    let interior_peaks = significant_maxima(&chi).len();
    let window = ScalingWindow::new(Side::Below, proto.eps_min, proto.eps_max)?;
    let dom: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.largest_domain)).collect();
    let mag: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.mean_magnetization)).collect();
    let beta = extract_beta(&dom, t_peak, window);
    let beta_magnetization = extract_beta(&mag, t_peak, window);
    let events = domain_events(&cfg, t_peak, proto.replicas, proto.snapshots, proto.domain_every, seed.wrapping_add(1))?;
    let hist = SizeHistogram::from_events(&events);
    let fit = fit_tau(&hist, FitRange::new(2, proto.l)?, TauGrid::default())?;
    Ok(SpinReport { samples, t_peak, interior_peaks, fit, beta, beta_magnetization, events })
}

// ------------------------------------------------------------------ collision

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionProtocol {
    pub particles: usize,
    pub binding: f64,
    pub beam_energy: f64,
    pub t_end: f64,
    pub dt: f64,
    pub events: usize,
    pub fit_min: usize,
    pub fit_max: usize,
    /// Halvings of `dt` allowed after a drift failure.
    pub max_retries: u32,
}

describe_fields!(CollisionProtocol, "collision", particles, binding, beam_energy, t_end, dt, events, fit_min, fit_max, max_retries);

impl CollisionProtocol {
    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Smoke => Self { particles: 32, binding: -3.5, beam_energy: 25.0, t_end: 15.0, dt: 0.001, events: 16, fit_min: 2, fit_max: 8, max_retries: 3 },
            Scale::Desk => Self { particles: 64, binding: -4.0, beam_energy: 25.0, t_end: 30.0, dt: 0.001, events: 64, fit_min: 2, fit_max: 16, max_retries: 3 },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionEvent {
    pub fragments: EventRecord,
    /// Initial ECRA multiplicity (t = 0).
    pub initial_fragments: usize,
    pub dt: f64,
    pub max_drift: f64,
    pub max_momentum: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionReport {
    pub events: Vec<CollisionEvent>,
    pub fit: PowerLawFit,
}

/// Runs a head-on collision, halving `dt` on drift failures; returns the
/// snapshots and the `dt` that was accepted.
pub fn collide_with_retry(
    a: &crate::md::ParticleSystem,
    b: &crate::md::ParticleSystem,
    potential: &PairPotential,
    cfg: &CollisionConfig,
    max_retries: u32,
) -> Result<(Vec<crate::md::Snapshot>, f64)> {
    let mut c = *cfg;
    let mut tries = 0;
    loop {
        match collide(a, b, potential, &c) {
            Ok(s) => return Ok((s, c.dt)),
            Err(Error::EnergyDrift { suggested_dt, .. }) if tries < max_retries => {
                tries += 1;
                c.dt = suggested_dt;
                c.snapshot_stride *= 2;
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn run_collisions(proto: &CollisionProtocol, seed: u64) -> Result<CollisionReport> {
    let pot = PairPotential::default();
    let prep = DropletConfig::default();
    let events: Vec<CollisionEvent> = (0..proto.events as u64)
        .into_par_iter()
        .map(|e| {
            let a = prepare_droplet(proto.particles, proto.binding, &pot, &prep, &mut RngStream::new(seed, 2 * e))?;
            let b = prepare_droplet(proto.particles, proto.binding, &pot, &prep, &mut RngStream::new(seed, 2 * e + 1))?;
            let mut cfg = CollisionConfig::new(proto.beam_energy, proto.t_end);
            cfg.dt = proto.dt;
            cfg.snapshot_stride = usize::MAX / 4;
            let (snaps, dt) = collide_with_retry(&a, &b, &pot, &cfg, proto.max_retries)?;
            let (first, last) = (&snaps[0], snaps.last().expect("collide records t = 0"));
            let max_drift = snaps.iter().map(|s| ((s.energy - first.energy) / first.energy).abs()).fold(0.0, f64::max);
            let max_momentum = snaps.iter().flat_map(|s| s.momentum).map(f64::abs).fold(0.0, f64::max);
            let ecra_seed = seed.wrapping_mul(1_000_003).wrapping_add(e);
            let p0 = anneal(&first.system, &pot, &AnnealSchedule::default_for(&first.system, &pot), ecra_seed)?;
            let p1 = anneal(&last.system, &pot, &AnnealSchedule::default_for(&last.system, &pot), ecra_seed)?;
            Ok(CollisionEvent { fragments: fragment_sizes(&p1), initial_fragments: p0.n_clusters(), dt, max_drift, max_momentum })
        })
        .collect::<Result<_>>()?;
    let records: Vec<EventRecord> = events.iter().map(|e| e.fragments.clone()).collect();
    let hist = SizeHistogram::from_events(&records);
    let fit = fit_tau(&hist, FitRange::new(proto.fit_min, proto.fit_max)?, TauGrid::new(1.0, 4.0, 0.01)?)?;
    Ok(CollisionReport { events, fit })
}

// --------------------------------------------------------------------- table1

#[derive(Clone, Debug, PartialEq)]
pub struct Table1Row {
    pub system: &'static str,
    pub tau: Option<f64>,
    pub stderr: Option<f64>,
    pub reference: &'static str,
    /// Control value of the fitted ensemble, or the error that stopped the row.
    pub note: String,
}

pub const TABLE1_REFERENCE: [(&str, &str); 4] = [
    ("HIV Cellular Automaton", "2.32"),
    ("Colossal Magnetoresistance", "2.38"),
    ("3-D MD Collision Simulations", "2.18"),
    ("Cubic Lattice Percolation", "2.32 ± 0.02"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Table1Config {
    pub scale: Scale,
    pub percolation: PercolationProtocol,
    pub hiv: HivProtocol,
    pub spin: SpinProtocol,
    pub collision: CollisionProtocol,
}

impl Table1Config {
    pub fn preset(scale: Scale) -> Self {
        Self {
            scale,
            percolation: PercolationProtocol::preset(scale),
            hiv: HivProtocol::preset(scale),
            spin: SpinProtocol::preset(scale),
            collision: CollisionProtocol::preset(scale),
        }
    }
}

impl Describe for Table1Config {
    fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![("scale".to_string(), self.scale.to_string())];
        out.extend(self.hiv.describe());
        out.extend(self.spin.describe());
        out.extend(self.collision.describe());
        out.extend(self.percolation.describe());
        out
    }
}

fn row(k: usize, result: Result<(PowerLawFit, String)>) -> Table1Row {
    let (system, reference) = TABLE1_REFERENCE[k];
    match result {
        Ok((fit, note)) => Table1Row { system, tau: Some(fit.tau), stderr: Some(fit.tau_se), reference, note },
        Err(e) => Table1Row { system, tau: None, stderr: None, reference, note: format!("error: {e}") },
    }
}

/// One τ row per system; a failing system fills its row with the error
/// instead of aborting the table. Systems use seeds `seed`, `seed + 1`, ...
pub fn table1(cfg: &Table1Config, seed: u64) -> Vec<Table1Row> {
    vec![
        row(0, run_hiv(&cfg.hiv, seed).map(|r| (r.fit, format!("q_vs={:.3}", r.q_vs)))),
        row(1, run_spin(&cfg.spin, seed.wrapping_add(1)).map(|r| (r.fit, format!("T={:.3}", r.t_peak)))),
        row(2, run_collisions(&cfg.collision, seed.wrapping_add(2)).map(|r| (r.fit, format!("E_beam={}", cfg.collision.beam_energy)))),
        row(3, run_percolation(&cfg.percolation, seed.wrapping_add(3)).map(|r| (r.fit, format!("p={:.4}", r.p_c)))),
    ]
}
