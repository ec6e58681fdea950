use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("shot-noise term undefined: cooperativity must be positive")]
    ZeroCooperativity,

    #[error("peak ratio {0} is below the shot-noise floor of 1/2")]
    BelowShotNoiseFloor(f64),

    #[error("unphysical peak: negative discriminant {0}")]
    UnphysicalPeak(f64),

    #[error("atom-cavity detuning must be non-zero")]
    ZeroDetuning,

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("no resonance detected: peak excess {excess:.3e} does not exceed 3x floor spread {spread:.3e}")]
    NoResonance { excess: f64, spread: f64 },

    #[error("degenerate fit: unidentifiable parameters {0:?}")]
    DegenerateFit(Vec<String>),

    #[error("fit did not converge")]
    NotConverged,

    #[error("no frequency bin near {0} rad/s")]
    MissingBin(f64),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
