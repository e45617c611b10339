//! Fisher droplet yields and their normalization.

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Unnormalized droplet yield
/// `A^-tau * exp(-(dmu*A + surface_coeff*A^(2/3)) / T)`.
///
/// `surface_coeff` bundles the surface-tension prefactor; with `dmu = 0` and
/// `surface_coeff = 0` the yield is the pure power law of the critical point.
pub fn fisher_yield(a: usize, tau: f64, surface_coeff: f64, temperature: f64, dmu: f64) -> Result<f64> {
    if a == 0 {
        return Err(invalid("A", "droplet size must be >= 1"));
    }
    if !(temperature > 0.0) {
        return Err(invalid("T", format!("temperature must be positive, got {temperature}")));
    }
    let a = a as f64;
    let exponent = -(dmu * a + surface_coeff * a.powf(2.0 / 3.0)) / temperature;
    Ok(a.powf(-tau) * exponent.exp())
}

/// `q0 = 1 / sum_{A=1}^{A_system} A^(1 - tau)`, the amplitude making the first
/// moment of `q0 * A^-tau` equal to one.
pub fn normalization(tau: f64, a_system: usize) -> f64 {
    // smallest terms first
    let sum: f64 = (1..=a_system.max(1)).rev().map(|a| (a as f64).powf(1.0 - tau)).sum();
    1.0 / sum
}

/// Inverse-CDF sampler of fragment sizes `A in [1, a_max]` with probability
/// proportional to a given weight function.
#[derive(Clone, Debug)]
pub struct SizeSampler {
    cdf: Vec<f64>,
}

impl SizeSampler {
    pub fn new(a_max: usize, mut weight: impl FnMut(usize) -> f64) -> Result<Self> {
        if a_max == 0 {
            return Err(invalid("a_max", "must be >= 1"));
        }
        let mut cdf = Vec::with_capacity(a_max);
        let mut acc = 0.0;
        for a in 1..=a_max {
            let w = weight(a);
            if !(w >= 0.0) || !w.is_finite() {
                return Err(invalid("weight", format!("weight of size {a} is {w}")));
            }
            acc += w;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(invalid("weight", "all weights are zero"));
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { cdf })
    }

    /// Sampler for the Fisher yield with the given parameters.
    pub fn fisher(a_max: usize, tau: f64, surface_coeff: f64, temperature: f64, dmu: f64) -> Result<Self> {
        fisher_yield(1, tau, surface_coeff, temperature, dmu)?;
        Self::new(a_max, |a| {
            fisher_yield(a, tau, surface_coeff, temperature, dmu).unwrap_or(0.0)
        })
    }

    pub fn a_max(&self) -> usize {
        self.cdf.len()
    }

    pub fn probability(&self, a: usize) -> f64 {
        match a {
            0 => 0.0,
            1 => self.cdf[0],
            a if a <= self.cdf.len() => self.cdf[a - 1] - self.cdf[a - 2],
            _ => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.cdf.len() - 1) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Neumaier-compensated forward summation, independent of `normalization`.
    fn compensated_q0(tau: f64, a_system: usize) -> f64 {
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for a in 1..=a_system {
            let x = (a as f64).powf(1.0 - tau);
            let t = sum + x;
            if sum.abs() >= x.abs() {
                c += (sum - t) + x;
            } else {
                c += (x - t) + sum;
            }
            sum = t;
        }
        1.0 / (sum + c)
    }

    #[test]
    fn critical_regime_is_pure_power_law() {
        for a in [1usize, 2, 7, 100] {
            let y = fisher_yield(a, 2.3, 0.0, 1.7, 0.0).unwrap();
            assert_eq!(y, (a as f64).powf(-2.3));
        }
    }

    #[test]
    fn smallest_droplet() {
        let y = fisher_yield(1, 2.5, 0.7, 2.0, 0.3).unwrap();
        assert!((y - (-(0.3 + 0.7) / 2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        assert!(fisher_yield(3, 2.3, 1.0, 0.0, 0.0).is_err());
        assert!(fisher_yield(3, 2.3, 1.0, -1.0, 0.0).is_err());
        assert!(fisher_yield(0, 2.3, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn damped_yield_decreases() {
        let ys: Vec<f64> = (1..=50).map(|a| fisher_yield(a, 2.3, 1.0, 2.0, 0.0).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn normalization_small_cases() {
        assert_eq!(normalization(2.7, 1), 1.0);
        assert!((normalization(2.0, 2) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_matches_compensated_sum() {
        let q = normalization(2.18, 100);
        let oracle = compensated_q0(2.18, 100);
        assert!((q - oracle).abs() / oracle < 1e-12, "{q} vs {oracle}");
    }

    #[test]
    fn normalization_identity() {
        for &tau in &[2.01, 2.18, 2.32, 2.5, 2.99] {
            for &n in &[1usize, 2, 10, 333, 10_000] {
                let q = normalization(tau, n);
                let m1: f64 = (1..=n).map(|a| q * (a as f64).powf(1.0 - tau)).sum();
                assert!((m1 - 1.0).abs() < 1e-10, "tau={tau} n={n} m1={m1}");
            }
        }
    }

    #[test]
    fn sampler_reproduces_probabilities() {
        let s = SizeSampler::fisher(20, 2.32, 0.0, 1.0, 0.0).unwrap();
        let total: f64 = (1..=20).map(|a| s.probability(a)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mut rng = RngStream::new(5, 0);
        let n = 200_000;
        let mut counts = [0usize; 21];
        for _ in 0..n {
            counts[s.sample(&mut rng)] += 1;
        }
        for a in 1..=20 {
            let p = s.probability(a);
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((counts[a] as f64 - n as f64 * p).abs() < 5.0 * sigma + 1.0, "A={a}");
        }
    }
}
