//! Exponent extraction: Fisher yields, χ² power-law fits, critical-multiplicity
//! selection, moments and the γ/β scaling fits.

mod fisher;
mod fit;
mod moments;

pub use fisher::{fisher_yield, normalization, SizeSampler};
pub use fit::{
    critical_multiplicity, fit_tau, Bin, CriticalMultiplicity, FitRange, MultiplicityBin, PowerLawFit,
    SizeHistogram, TauGrid, MIN_EVENTS_PER_BIN,
};
pub use moments::{
    event_moment, extract_beta, extract_gamma, group_by_control, loglog_slope, moments, ExponentEstimate,
    MomentPoint, MomentSeries, ScalingWindow, Side, MIN_SCALING_POINTS,
};

/// Mean and standard error of the mean.
pub fn mean_se(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        s += x;
        s2 += x * x;
    }
    let b = fit::bin_from_sums(s, s2, n);
    (b.mean, b.se)
}

/// `tau = 2 + beta / (beta + gamma)`.
pub fn tau_from_beta_gamma(beta: f64, gamma: f64) -> crate::Result<f64> {
    check_pair(beta, gamma)?;
    Ok(2.0 + beta / (beta + gamma))
}

/// `sigma = 1 / (beta + gamma)`.
pub fn sigma_from_beta_gamma(beta: f64, gamma: f64) -> crate::Result<f64> {
    check_pair(beta, gamma)?;
    Ok(1.0 / (beta + gamma))
}

fn check_pair(beta: f64, gamma: f64) -> crate::Result<()> {
    if !(beta + gamma != 0.0) || !beta.is_finite() || !gamma.is_finite() {
        return Err(crate::error::invalid("beta+gamma", format!("beta={beta}, gamma={gamma}")));
    }
    Ok(())
}
