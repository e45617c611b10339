//! Moments of fragment distributions and the γ/β scaling fits.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::events::EventRecord;

use super::fit::bin_from_sums;

/// Moment estimate for one ensemble (one control value or multiplicity bin).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentPoint {
    pub control: f64,
    pub value: f64,
    pub se: f64,
    /// Mean size of the largest fragment.
    pub a_max_mean: f64,
    pub a_max_se: f64,
    pub n_events: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentSeries {
    pub k: u32,
    pub exclude_largest: bool,
    pub points: Vec<MomentPoint>,
}

impl MomentSeries {
    pub fn values(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.control, p.value)).collect()
    }

    pub fn a_max(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.control, p.a_max_mean)).collect()
    }

    /// Control value of the largest moment.
    pub fn peak(&self) -> Option<f64> {
        self.points
            .iter()
            .fold(None, |best: Option<&MomentPoint>, p| match best {
                Some(b) if b.value >= p.value => Some(b),
                _ => Some(p),
            })
            .map(|p| p.control)
    }
}

/// Groups events by control value in ascending order; untagged events are dropped.
pub fn group_by_control(events: &[EventRecord]) -> Vec<(f64, Vec<&EventRecord>)> {
    let mut groups: BTreeMap<u64, (f64, Vec<&EventRecord>)> = BTreeMap::new();
    for e in events {
        if let Some(c) = e.control() {
            groups.entry(order_key(c)).or_insert_with(|| (c, Vec::new())).1.push(e);
        }
    }
    groups.into_values().collect()
}

// total order on finite floats, mapped into u64 space
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 { !b } else { b | (1 << 63) }
}

/// Per-event `M_k = sum_A n_A A^k` with `n_A` = count / system size, averaged
/// per group. With `exclude_largest`, each event's largest fragment is left
/// out of the sum (it stands in for the infinite cluster).
pub fn moments(groups: &[(f64, Vec<&EventRecord>)], k: u32, exclude_largest: bool) -> Result<MomentSeries> {
    if !(1..=2).contains(&k) {
        return Err(invalid("k", format!("moment order must be 1 or 2, got {k}")));
    }
    let points = groups
        .iter()
        .map(|(control, events)| {
            let (mut s, mut s2, mut a, mut a2) = (0.0, 0.0, 0.0, 0.0);
            for e in events {
                let m = event_moment(e, k, exclude_largest);
                s += m;
                s2 += m * m;
                let big = e.largest().unwrap_or(0) as f64;
                a += big;
                a2 += big * big;
            }
            let v = bin_from_sums(s, s2, events.len());
            let amax = bin_from_sums(a, a2, events.len());
            MomentPoint {
                control: *control,
                value: v.mean,
                se: v.se,
                a_max_mean: amax.mean,
                a_max_se: amax.se,
                n_events: events.len(),
            }
        })
        .collect();
    Ok(MomentSeries { k, exclude_largest, points })
}

pub fn event_moment(e: &EventRecord, k: u32, exclude_largest: bool) -> f64 {
    let sizes = e.fragment_sizes();
    let skip = if exclude_largest {
        sizes.iter().enumerate().max_by_key(|&(i, &a)| (a, std::cmp::Reverse(i))).map(|(i, _)| i)
    } else {
        None
    };
    let sum: f64 = sizes
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .map(|(_, &a)| (a as f64).powi(k as i32))
        .sum();
    sum / e.system_size().max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Control values below the critical point.
    Below,
    /// Control values above the critical point.
    Above,
}

/// Which points enter a scaling fit: one side of the critical point, with
/// `eps_min <= |ε| <= eps_max`, `ε = (c - c_crit) / c_crit`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingWindow {
    pub side: Side,
    pub eps_min: f64,
    pub eps_max: f64,
}

impl ScalingWindow {
    pub fn new(side: Side, eps_min: f64, eps_max: f64) -> Result<Self> {
        if !(eps_min >= 0.0) || !(eps_max > eps_min) {
            return Err(invalid("window", format!("need 0 <= eps_min < eps_max, got [{eps_min}, {eps_max}]")));
        }
        Ok(Self { side, eps_min, eps_max })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_points: usize,
    pub eps_min: f64,
    pub eps_max: f64,
}

pub const MIN_SCALING_POINTS: usize = 5;

/// Least-squares slope of `ln y` against `ln x` with its standard error.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Fit("need at least two points for a slope".into()));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return Err(invalid("series", format!("non-positive value at ({x}, {y})")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let stderr = if lx.len() > 2 {
        let rss: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}

fn scaling_slope(series: &[(f64, f64)], critical: f64, window: ScalingWindow) -> Result<ExponentEstimate> {
    if critical == 0.0 || !critical.is_finite() {
        return Err(invalid("critical_point", format!("must be finite and nonzero, got {critical}")));
    }
    let mut pts = Vec::new();
    for &(c, v) in series {
        let eps = (c - critical) / critical;
        let on_side = match window.side {
            Side::Below => c < critical,
            Side::Above => c > critical,
        };
        if on_side && (window.eps_min..=window.eps_max).contains(&eps.abs()) {
            if !(v > 0.0) {
                return Err(invalid("series", format!("non-positive value {v} at control {c}")));
            }
            pts.push((eps.abs(), v));
        }
    }
    if pts.len() < MIN_SCALING_POINTS {
        return Err(Error::Fit(format!(
            "{} points in the scaling window; need at least {MIN_SCALING_POINTS}",
            pts.len()
        )));
    }
    let (slope, stderr) = loglog_slope(&pts)?;
    let eps_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let eps_max = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    Ok(ExponentEstimate { value: slope, stderr, n_points: pts.len(), eps_min, eps_max })
}

/// γ from `M_2 ~ |ε|^-γ`.
pub fn extract_gamma(series: &[(f64, f64)], critical: f64, window: ScalingWindow) -> Result<ExponentEstimate> {
    scaling_slope(series, critical, window).map(|e| ExponentEstimate { value: -e.value, ..e })
}

/// β from `A_max ~ |ε|^β`.
pub fn extract_beta(series: &[(f64, f64)], critical: f64, window: ScalingWindow) -> Result<ExponentEstimate> {
    scaling_slope(series, critical, window)
}
