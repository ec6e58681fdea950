//! Quantum-limited force sensing with a cavity-optomechanical oscillator.
//!
//! The crate is split along the measurement chain:
//!
//! - [`model`]: oscillator and measurement descriptions and every closed-form
//!   relation (susceptibility, sensitivity spectra, the standard quantum limit,
//!   calibration formulas).
//! - [`synth`]: seeded Monte Carlo generation of driven heterodyne responses
//!   and averaged noise power spectra.
//! - [`estimator`]: joint damped Gauss-Newton fit of the complex coherent
//!   response and the incoherent noise spectrum with shared resonance
//!   parameters.
//! - [`analysis`]: conversion of fits into force sensitivities, sensitivity
//!   spectra and phase-space imprecision ensembles.
//!
//! All quantities are SI; angular frequencies are in rad/s.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
pub use model::constants;
pub use model::{
    ComplexSpectrum, DriveConfig, MeasurementConfig, MechanicalOscillator, PowerSpectrum,
};

/// A value with a one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    pub fn relative_sigma(&self) -> f64 {
        self.sigma / self.value.abs()
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.value, self.sigma)
    }
}
