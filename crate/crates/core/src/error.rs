use thiserror::Error;

/// Errors raised by the simulators and the fitting pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate configuration: particles {i} and {j} are {distance:e} apart")]
    DegenerateConfiguration { i: usize, j: usize, distance: f64 },

    #[error("energy drift {drift:e} exceeds bound {bound:e} at t = {time}; retry with dt <= {suggested_dt}")]
    EnergyDrift {
        drift: f64,
        bound: f64,
        time: f64,
        suggested_dt: f64,
    },

    #[error("droplet failed to bind after {steps} steps (energy per particle {energy_per_particle}, target {target})")]
    BindingFailed {
        steps: usize,
        energy_per_particle: f64,
        target: f64,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("too many elements for exhaustive enumeration: {n} > {limit}")]
    EnumerationGuard { n: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
