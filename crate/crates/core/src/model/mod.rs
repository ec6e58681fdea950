//! Oscillator and measurement descriptions plus the closed-form physics of
//! continuous optomechanical force measurement.

mod calibration;
mod measurement;
mod oscillator;
mod physics;
mod spectrum;

pub use calibration::{
    cavity_shift, cooperativity_from_peak, cooperativity_from_peak_slope,
    cooperativity_from_photons, optomech_coupling, recoil_splitting,
};
pub use measurement::{DriveConfig, MeasurementConfig};
pub use oscillator::MechanicalOscillator;
pub use physics::{
    acceleration_sensitivity, force_sensitivity, heterodyne_psd_pm, min_sensitivity,
    optimal_cooperativity, photon_spectrum_pm, position_imprecision_product, sensitivity_terms,
    sql_sensitivity, susceptibility, transduction, uncertainty_bound, SensitivityTerms,
};
pub use spectrum::{uniform_grid, ComplexSpectrum, PowerSpectrum};

pub mod constants {
    use std::f64::consts::PI;

    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Mass of one ⁸⁷Rb atom, kg.
    pub const M_RB87: f64 = 1.443_16e-25;
    /// Standard gravity, m/s².
    pub const G_EARTH: f64 = 9.81;
    /// Speed of light, m/s.
    pub const C_LIGHT: f64 = 299_792_458.0;
    /// Conversion factor from N²/Hz to yN²/Hz.
    pub const YN2_PER_N2: f64 = 1e48;

    /// Angular frequency for a frequency in Hz.
    pub fn angular(f_hz: f64) -> f64 {
        2.0 * PI * f_hz
    }

    /// Frequency in Hz for an angular frequency.
    pub fn hertz(omega: f64) -> f64 {
        omega / (2.0 * PI)
    }
}
