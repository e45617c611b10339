//! Weighted χ² power-law fits of fragment-size histograms.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::events::EventRecord;

/// Ensemble-averaged yield of one fragment size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bin {
    pub mean: f64,
    /// Standard error of `mean` over the ensemble.
    pub se: f64,
}

/// Mean yield `n_A` per unit system mass, with standard errors, keyed by size.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SizeHistogram {
    bins: BTreeMap<usize, Bin>,
    n_events: usize,
}

impl SizeHistogram {
    pub fn from_bins(bins: BTreeMap<usize, Bin>, n_events: usize) -> Self {
        Self { bins, n_events }
    }

    /// Averages per-event yields `count_A / system_size` over the events.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        let mut n_events = 0usize;
        let mut per_event: BTreeMap<usize, usize> = BTreeMap::new();
        for e in events {
            n_events += 1;
            per_event.clear();
            for &a in e.fragment_sizes() {
                *per_event.entry(a).or_insert(0) += 1;
            }
            let mass = e.system_size().max(1) as f64;
            for (&a, &c) in &per_event {
                let x = c as f64 / mass;
                let s = sums.entry(a).or_insert((0.0, 0.0));
                s.0 += x;
                s.1 += x * x;
            }
        }
        let bins = sums
            .into_iter()
            .map(|(a, (s, s2))| (a, bin_from_sums(s, s2, n_events)))
            .collect();
        Self { bins, n_events }
    }

    pub fn bins(&self) -> &BTreeMap<usize, Bin> {
        &self.bins
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn get(&self, a: usize) -> Option<Bin> {
        self.bins.get(&a).copied()
    }

    /// Multiplies every mean and standard error by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            bins: self
                .bins
                .iter()
                .map(|(&a, b)| (a, Bin { mean: b.mean * factor, se: b.se * factor }))
                .collect(),
            n_events: self.n_events,
        }
    }
}

pub(crate) fn bin_from_sums(sum: f64, sum_sq: f64, n: usize) -> Bin {
    if n == 0 {
        return Bin { mean: 0.0, se: 0.0 };
    }
    let nf = n as f64;
    let mean = sum / nf;
    let se = if n > 1 {
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    Bin { mean, se }
}

/// Inclusive fragment-size range used in a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitRange {
    pub min: usize,
    pub max: usize,
}

impl FitRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min == 0 || max < min {
            return Err(invalid("fit_range", format!("[{min}, {max}] is empty or starts at 0")));
        }
        Ok(Self { min, max })
    }

    /// `[2, A_system / 4]`: monomers and the finite-size bend are left out.
    pub fn default_for(a_system: usize) -> Self {
        Self {
            min: 2,
            max: (a_system / 4).max(2),
        }
    }

    pub fn contains(&self, a: usize) -> bool {
        (self.min..=self.max).contains(&a)
    }
}

/// Grid of trial exponents scanned by [`fit_tau`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self { min: 2.0, max: 3.0, step: 0.01 }
    }
}

impl TauGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max > min) {
            return Err(invalid("tau_grid", format!("need min < max and step > 0, got [{min}, {max}] step {step}")));
        }
        Ok(Self { min, max, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub tau: f64,
    /// Best-fit amplitude of `q0 * A^-tau` for the fitted `tau`.
    pub q0: f64,
    pub chi2: f64,
    pub chi2_reduced: f64,
    /// Standard error of `tau` from the Δχ² = 1 curvature of the χ² parabola.
    pub tau_se: f64,
    pub fit_range: FitRange,
    pub n_bins: usize,
    pub n_events: usize,
}

struct Points {
    a: Vec<f64>,
    y: Vec<f64>,
    /// Variance-to-mean ratio of each bin.
    phi: Vec<f64>,
}

impl Points {
    fn collect(hist: &SizeHistogram, range: FitRange) -> Result<Self> {
        let observed: Vec<(usize, Bin)> = hist
            .bins()
            .range(range.min..=range.max)
            .map(|(&a, &b)| (a, b))
            .collect();
        if observed.is_empty() {
            return Err(Error::Fit(format!(
                "no histogram bins in fit range [{}, {}]",
                range.min, range.max
            )));
        }
        if observed.iter().all(|(_, b)| !(b.mean > 0.0)) {
            return Err(Error::Fit("all bins in the fit range are zero".into()));
        }
        // pooled dispersion for bins without their own spread estimate
        let (se2, mass) = observed
            .iter()
            .filter(|(_, b)| b.mean > 0.0 && b.se > 0.0)
            .fold((0.0, 0.0), |(s, m), (_, b)| (s + b.se * b.se, m + b.mean));
        let pooled = if mass > 0.0 { se2 / mass } else { 1.0 };
        // sizes inside the range that were never observed count as zero yields
        let hi = observed.last().map(|(a, _)| *a).unwrap_or(range.min);
        let mut pts = Points { a: vec![], y: vec![], phi: vec![] };
        for a in range.min..=hi {
            let b = hist.get(a).unwrap_or(Bin { mean: 0.0, se: 0.0 });
            let phi = if b.mean > 0.0 && b.se > 0.0 { b.se * b.se / b.mean } else { pooled };
            pts.a.push(a as f64);
            pts.y.push(b.mean.max(0.0));
            pts.phi.push(phi);
        }
        Ok(pts)
    }

    /// Weighted least-squares amplitude and χ² at `tau` with fixed weights.
    fn chi2_weighted(&self, tau: f64, w: &[f64]) -> (f64, f64) {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        let x: Vec<f64> = self.a.iter().map(|a| a.powf(-tau)).collect();
        for i in 0..x.len() {
            sxy += w[i] * self.y[i] * x[i];
            sxx += w[i] * x[i] * x[i];
        }
        let q0 = sxy / sxx;
        let chi2 = (0..x.len()).map(|i| w[i] * (self.y[i] - q0 * x[i]).powi(2)).sum();
        (q0, chi2)
    }

    /// Inverse model variances `1 / (phi_A * q0 * A^-tau)`.
    fn weights(&self, tau: f64, q0: f64) -> Vec<f64> {
        (0..self.a.len())
            .map(|i| 1.0 / (self.phi[i] * q0 * self.a[i].powf(-tau)))
            .collect()
    }
}

struct Scan {
    tau: f64,
    curvature: f64,
}

fn scan(pts: &Points, taus: &[f64], step: f64, w: &[f64]) -> Scan {
    let chis: Vec<f64> = taus.iter().map(|&t| pts.chi2_weighted(t, w).1).collect();
    let best = chis
        .iter()
        .enumerate()
        .fold(0usize, |b, (i, &c)| if c < chis[b] { i } else { b });
    let mut tau = taus[best];
    let mut curvature = f64::NAN;
    if best > 0 && best + 1 < taus.len() {
        let (c0, c1, c2) = (chis[best - 1], chis[best], chis[best + 1]);
        let denom = c0 - 2.0 * c1 + c2;
        if denom > 0.0 {
            let refined = tau + 0.5 * (c0 - c2) / denom * step;
            if pts.chi2_weighted(refined, w).1 <= c1 {
                tau = refined;
            }
            curvature = denom / (step * step);
        }
    }
    Scan { tau, curvature }
}

const REWEIGHT_ITERATIONS: usize = 30;

/// Fits `n_A = q0 * A^-tau` by weighted χ² over `range`, scanning `grid` and
/// refining the minimum with a parabola through the neighboring grid points.
///
/// Pearson-style weighting: each bin's variance is the model prediction times
/// the bin's variance-to-mean ratio measured over the ensemble, with the
/// weights re-derived from the fitted model until the exponent settles. Sizes in the
/// range up to the largest observed one enter as zero yields when absent.
pub fn fit_tau(hist: &SizeHistogram, range: FitRange, grid: TauGrid) -> Result<PowerLawFit> {
    let pts = Points::collect(hist, range)?;
    let taus = grid.points();
    // start from variances proportional to the observed yields (floored by
    // the smallest nonzero one), then iterate with model-based variances
    let floor = pts.y.iter().copied().filter(|&y| y > 0.0).fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = (0..pts.a.len())
        .map(|i| 1.0 / (pts.phi[i] * pts.y[i].max(floor)))
        .collect();
    let mut s = scan(&pts, &taus, grid.step, &w);
    for _ in 0..REWEIGHT_ITERATIONS {
        let (q0, _) = pts.chi2_weighted(s.tau, &w);
        w = pts.weights(s.tau, q0);
        let next = scan(&pts, &taus, grid.step, &w);
        let done = (next.tau - s.tau).abs() < 1e-9;
        s = next;
        if done {
            break;
        }
    }
    let (q0, chi2) = pts.chi2_weighted(s.tau, &w);
    let n_bins = pts.a.len();
    let dof = n_bins.saturating_sub(2).max(1) as f64;
    let tau_se = if s.curvature.is_finite() && s.curvature > 0.0 {
        (2.0 / s.curvature).sqrt()
    } else {
        f64::NAN
    };
    Ok(PowerLawFit {
        tau: s.tau,
        q0,
        chi2,
        chi2_reduced: chi2 / dof,
        tau_se,
        fit_range: range,
        n_bins,
        n_events: hist.n_events(),
    })
}

/// One multiplicity bin of [`critical_multiplicity`].
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplicityBin {
    pub m_min: usize,
    pub m_max: usize,
    pub n_events: usize,
    pub fit: Option<PowerLawFit>,
}

impl MultiplicityBin {
    pub fn label(&self) -> String {
        if self.m_min == self.m_max {
            self.m_min.to_string()
        } else {
            format!("{}-{}", self.m_min, self.m_max)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalMultiplicity {
    /// Representative multiplicity of the selected bin (its most populated value).
    pub m_c: usize,
    /// Index of the selected bin in `bins`.
    pub selected: usize,
    /// Set when the input formed a single bin, which is selected by default.
    pub degenerate: bool,
    pub bins: Vec<MultiplicityBin>,
}

/// Minimum events per multiplicity bin; sparser bins merge with neighbors.
pub const MIN_EVENTS_PER_BIN: usize = 20;

/// Bins events by multiplicity, fits each bin, and selects the bin with the
/// smallest reduced χ² as the critical one.
///
/// `range = None` uses [`FitRange::default_for`] the largest system size.
pub fn critical_multiplicity(
    events: &[EventRecord],
    grid: TauGrid,
    range: Option<FitRange>,
) -> Result<CriticalMultiplicity> {
    if events.is_empty() {
        return Err(Error::Fit("no events".into()));
    }
    let mut by_m: BTreeMap<usize, Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        by_m.entry(e.multiplicity()).or_default().push(e);
    }
    let a_system = events.iter().map(EventRecord::system_size).max().unwrap_or(1);
    let range = range.unwrap_or_else(|| FitRange::default_for(a_system));

    // greedy merge of consecutive multiplicities until each bin is populated enough
    let mut groups: Vec<(usize, usize, Vec<&EventRecord>)> = Vec::new();
    let mut current: Option<(usize, usize, Vec<&EventRecord>)> = None;
    for (m, evs) in by_m {
        let g = current.get_or_insert_with(|| (m, m, Vec::new()));
        g.1 = m;
        g.2.extend(evs);
        if g.2.len() >= MIN_EVENTS_PER_BIN {
            groups.push(current.take().unwrap());
        }
    }
    if let Some(rest) = current {
        match groups.last_mut() {
            Some(last) => {
                last.1 = rest.1;
                last.2.extend(rest.2);
            }
            None => groups.push(rest),
        }
    }

    let bins: Vec<MultiplicityBin> = groups
        .iter()
        .map(|(lo, hi, evs)| MultiplicityBin {
            m_min: *lo,
            m_max: *hi,
            n_events: evs.len(),
            fit: fit_tau(&SizeHistogram::from_events(evs.iter().copied()), range, grid).ok(),
        })
        .collect();

    let representative = |g: &(usize, usize, Vec<&EventRecord>)| {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &g.2 {
            *counts.entry(e.multiplicity()).or_insert(0) += 1;
        }
        counts
            .iter()
            .fold((0usize, 0usize), |b, (&m, &c)| if c > b.1 { (m, c) } else { b })
            .0
    };

    if bins.len() == 1 {
        return Ok(CriticalMultiplicity {
            m_c: representative(&groups[0]),
            selected: 0,
            degenerate: true,
            bins,
        });
    }
    // a fit through two points is exact and says nothing about the shape
    let usable: Vec<usize> = (0..bins.len())
        .filter(|&i| bins[i].fit.is_some_and(|f| f.n_bins >= 3))
        .collect();
    if usable.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} usable multiplicity bins; need at least 3",
            usable.len()
        )));
    }
    let selected = usable
        .iter()
        .copied()
        .fold(usable[0], |b, i| {
            let (cb, ci) = (bins[b].fit.unwrap().chi2_reduced, bins[i].fit.unwrap().chi2_reduced);
            if ci < cb { i } else { b }
        });
    Ok(CriticalMultiplicity {
        m_c: representative(&groups[selected]),
        selected,
        degenerate: false,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::fisher::{fisher_yield, SizeSampler};
    use crate::rng::RngStream;

    fn synthetic(tau: f64, amp: f64, a_max: usize) -> SizeHistogram {
        let bins = (1..=a_max)
            .map(|a| (a, Bin { mean: amp * (a as f64).powf(-tau), se: 0.0 }))
            .collect();
        SizeHistogram::from_bins(bins, 1)
    }

    #[test]
    fn noiseless_recovery() {
        let h = synthetic(2.5, 0.3, 200);
        let f = fit_tau(&h, FitRange::new(2, 50).unwrap(), TauGrid::default()).unwrap();
        assert!((f.tau - 2.5).abs() <= 0.01, "tau = {}", f.tau);
        assert!(f.chi2 < 1e-10, "chi2 = {}", f.chi2);
        assert!((f.q0 - 0.3).abs() < 1e-6);
    }

    #[test]
    fn scale_invariance() {
        let bins = (1..=40)
            .map(|a| {
                let m = (a as f64).powf(-2.3) * (1.0 + 0.05 * ((a * 7 % 5) as f64 - 2.0));
                (a, Bin { mean: m, se: 0.1 * m + 1e-4 })
            })
            .collect();
        let h = SizeHistogram::from_bins(bins, 10);
        let r = FitRange::new(2, 40).unwrap();
        let a = fit_tau(&h, r, TauGrid::default()).unwrap();
        let b = fit_tau(&h.scaled(37.5), r, TauGrid::default()).unwrap();
        assert!((a.tau - b.tau).abs() < 1e-9);
        assert!((a.chi2 - b.chi2).abs() < 1e-9 * a.chi2.max(1.0));
    }

    #[test]
    fn empty_and_zero_ranges_rejected() {
        let h = synthetic(2.5, 1.0, 10);
        assert!(fit_tau(&h, FitRange::new(20, 30).unwrap(), TauGrid::default()).is_err());
        let zeros = SizeHistogram::from_bins(
            (1..=10).map(|a| (a, Bin { mean: 0.0, se: 0.0 })).collect(),
            3,
        );
        assert!(fit_tau(&zeros, FitRange::new(1, 10).unwrap(), TauGrid::default()).is_err());
        assert!(FitRange::new(0, 3).is_err());
        assert!(FitRange::new(5, 3).is_err());
    }

    #[test]
    fn consistency_over_random_taus() {
        let mut rng = RngStream::new(99, 0);
        let grid = TauGrid::default();
        for _ in 0..100 {
            let tau = 2.05 + 0.9 * rng.uniform();
            let bins = (1..=400)
                .map(|a| (a, Bin { mean: fisher_yield(a, tau, 0.0, 1.0, 0.0).unwrap(), se: 0.0 }))
                .collect();
            let h = SizeHistogram::from_bins(bins, 1);
            let f = fit_tau(&h, FitRange::default_for(400), grid).unwrap();
            assert!((f.tau - tau).abs() <= 2.0 * grid.step, "{tau} -> {}", f.tau);
        }
    }

    #[test]
    fn sampled_events_recover_tau() {
        // 10^4 fragments drawn from the critical Fisher yield, tau = 2.32
        let sampler = SizeSampler::fisher(200, 2.32, 0.0, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(7, 0);
        let events: Vec<EventRecord> = (0..100)
            .map(|_| {
                let sizes = (0..100).map(|_| sampler.sample(&mut rng)).collect();
                EventRecord::new(sizes, None).unwrap().with_system_size(100_000).unwrap()
            })
            .collect();
        let h = SizeHistogram::from_events(&events);
        let f = fit_tau(&h, FitRange::new(2, 50).unwrap(), TauGrid::default()).unwrap();
        assert!((2.27..=2.37).contains(&f.tau), "tau = {}", f.tau);
    }

    #[test]
    fn histogram_from_events() {
        let events = vec![
            EventRecord::new(vec![3, 2, 1], None).unwrap(),
            EventRecord::new(vec![1, 1, 1, 1, 2], None).unwrap(),
        ];
        let h = SizeHistogram::from_events(&events);
        assert_eq!(h.n_events(), 2);
        let b1 = h.get(1).unwrap();
        // per-event yields 1/6 and 4/6
        assert!((b1.mean - 5.0 / 12.0).abs() < 1e-15);
        assert!((b1.se - 0.25).abs() < 1e-12);
        let b3 = h.get(3).unwrap();
        assert!((b3.mean - 1.0 / 12.0).abs() < 1e-15);
    }

    fn ensemble(sampler: &SizeSampler, m: usize, n_events: usize, rng: &mut RngStream) -> Vec<EventRecord> {
        (0..n_events)
            .map(|_| {
                let sizes = (0..m).map(|_| sampler.sample(rng)).collect();
                EventRecord::new(sizes, None).unwrap().with_system_size(100_000).unwrap()
            })
            .collect()
    }

    #[test]
    fn picks_constructed_power_law_bin() {
        let pure = SizeSampler::fisher(400, 2.3, 0.0, 1.0, 0.0).unwrap();
        let damped = SizeSampler::fisher(400, 2.3, 1.5, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        let mut events = Vec::new();
        for m in [10usize, 15, 20, 25, 30, 35, 40] {
            let s = if m == 25 { &pure } else { &damped };
            events.extend(ensemble(s, m, 60, &mut rng));
        }
        let range = Some(FitRange::new(2, 30).unwrap());
        let cm = critical_multiplicity(&events, TauGrid::default(), range).unwrap();
        assert_eq!(cm.m_c, 25);
        assert!(!cm.degenerate);

        // argmin is independent of event order
        let mut shuffled = events.clone();
        let mut r2 = RngStream::new(2, 0);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r2.below(i + 1));
        }
        let cm2 = critical_multiplicity(&shuffled, TauGrid::default(), range).unwrap();
        assert_eq!(cm2.m_c, 25);
        assert_eq!(cm2.bins.len(), cm.bins.len());
    }

    #[test]
    fn single_bin_is_degenerate() {
        let s = SizeSampler::fisher(400, 2.3, 0.0, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(3, 0);
        let events = ensemble(&s, 12, 30, &mut rng);
        let cm = critical_multiplicity(&events, TauGrid::default(), None).unwrap();
        assert!(cm.degenerate);
        assert_eq!(cm.m_c, 12);
    }

    #[test]
    fn two_bins_rejected() {
        let s = SizeSampler::fisher(400, 2.3, 0.0, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut events = ensemble(&s, 12, 30, &mut rng);
        events.extend(ensemble(&s, 14, 30, &mut rng));
        assert!(critical_multiplicity(&events, TauGrid::default(), None).is_err());
    }

    #[test]
    fn sparse_multiplicities_merge() {
        let s = SizeSampler::fisher(400, 2.3, 0.0, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let mut events = Vec::new();
        for m in 5..=40 {
            events.extend(ensemble(&s, m, 7, &mut rng));
        }
        let cm = critical_multiplicity(&events, TauGrid::default(), None).unwrap();
        assert!(cm.bins.iter().all(|b| b.n_events >= MIN_EVENTS_PER_BIN));
        assert_eq!(cm.bins.iter().map(|b| b.n_events).sum::<usize>(), events.len());
    }
}
