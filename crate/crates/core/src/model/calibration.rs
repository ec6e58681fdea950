//! Calibration relations connecting measured quantities to the cooperativity
//! and the optomechanical coupling.

use super::constants::HBAR;
use super::oscillator::positive;
use crate::{Error, Result};

/// Cooperativity from the on-resonance incoherent peak normalized by the
/// total shot noise, `peak_ratio = S_het(ω_m) / S_SN`.
///
/// Inverts `peak_ratio = ½[1 + 4εC(2ν + C + 1)]` on its non-negative branch:
/// C = −(ν+½) + sqrt((ν+½)² + (2·peak_ratio − 1)/(4ε)).
pub fn cooperativity_from_peak(peak_ratio: f64, nu: f64, epsilon_eff: f64) -> Result<f64> {
    if !peak_ratio.is_finite() || peak_ratio < 0.5 {
        return Err(Error::BelowShotNoiseFloor(peak_ratio));
    }
    positive("epsilon_eff", epsilon_eff)?;
    let b = nu + 0.5;
    let excess = (2.0 * peak_ratio - 1.0) / (4.0 * epsilon_eff);
    let disc = b * b + excess;
    if !(disc >= 0.0) {
        return Err(Error::UnphysicalPeak(disc));
    }
    // b - sqrt(b² + x) cancels badly for small x; use the conjugate form
    Ok(excess / (b + disc.sqrt()))
}

/// dC/d(peak_ratio) of [`cooperativity_from_peak`].
pub fn cooperativity_from_peak_slope(peak_ratio: f64, nu: f64, epsilon_eff: f64) -> f64 {
    let b = nu + 0.5;
    let disc = b * b + (2.0 * peak_ratio - 1.0) / (4.0 * epsilon_eff);
    1.0 / (4.0 * epsilon_eff * disc.sqrt())
}

/// C = 4 n g_om² / (κ Γ).
pub fn cooperativity_from_photons(n_photons: f64, g_om: f64, kappa: f64, gamma: f64) -> Result<f64> {
    positive("n_photons", n_photons)?;
    positive("g_om", g_om)?;
    positive("kappa", kappa)?;
    positive("gamma", gamma)?;
    Ok(4.0 * n_photons * g_om * g_om / (kappa * gamma))
}

/// Collective coupling g_om = (g₀²/Δ_ca) k_p N_a z_HO, rad/s.
pub fn optomech_coupling(g0: f64, delta_ca: f64, k_p: f64, n_atoms: u64, z_ho: f64) -> Result<f64> {
    if delta_ca == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(g0 * g0 / delta_ca * k_p * n_atoms as f64 * z_ho)
}

/// Dispersive cavity shift N_a g₀² / (2Δ_ca), rad/s.
pub fn cavity_shift(n_atoms: u64, g0: f64, delta_ca: f64) -> Result<f64> {
    if delta_ca == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(n_atoms as f64 * g0 * g0 / (2.0 * delta_ca))
}

/// Level spacing reduction of a sinusoidal lattice, E_R/ħ = ħk_t²/(2m).
pub fn recoil_splitting(k_t: f64, m_atom: f64) -> Result<f64> {
    positive("k_t", k_t)?;
    positive("m_atom", m_atom)?;
    Ok(HBAR * k_t * k_t / (2.0 * m_atom))
}
