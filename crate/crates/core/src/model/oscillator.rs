use serde::{Deserialize, Serialize};

use super::constants::{angular, HBAR, M_RB87};
use crate::{Error, Result};

/// Collective centre-of-mass mode of a trapped atomic ensemble.
///
/// `mass()` is always `n_atoms * m_atom`; the ground-state scales
/// `p_ho` and `z_ho` follow from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalOscillator {
    pub n_atoms: u64,
    /// Mass per atom, kg.
    pub m_atom: f64,
    /// Resonance frequency ω_m, rad/s.
    pub omega_m: f64,
    /// Full mechanical linewidth Γ, rad/s.
    pub gamma: f64,
    /// Thermal phonon occupation ν.
    pub nu: f64,
}

impl MechanicalOscillator {
    pub fn new(n_atoms: u64, m_atom: f64, omega_m: f64, gamma: f64, nu: f64) -> Result<Self> {
        let osc = Self {
            n_atoms,
            m_atom,
            omega_m,
            gamma,
            nu,
        };
        osc.validate()?;
        Ok(osc)
    }

    /// Builds an oscillator from its total mass, assigning each atom
    /// `mass / n_atoms`.
    pub fn with_total_mass(
        mass: f64,
        n_atoms: u64,
        omega_m: f64,
        gamma: f64,
        nu: f64,
    ) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "must be at least 1"));
        }
        Self::new(n_atoms, mass / n_atoms as f64, omega_m, gamma, nu)
    }

    /// 1200 ⁸⁷Rb atoms, ω_m = 2π·110 kHz, Γ = 2π·3 kHz, ν = 1.2.
    pub fn reference() -> Self {
        Self {
            n_atoms: 1200,
            m_atom: M_RB87,
            omega_m: angular(110e3),
            gamma: angular(3e3),
            nu: 1.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 1 {
            return Err(Error::invalid("n_atoms", "must be at least 1"));
        }
        positive("m_atom", self.m_atom)?;
        positive("omega_m", self.omega_m)?;
        positive("gamma", self.gamma)?;
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::invalid("nu", format!("must be >= 0, got {}", self.nu)));
        }
        if self.gamma >= self.omega_m / 10.0 {
            log::warn!(
                "linewidth {:.3e} rad/s is not small against resonance {:.3e} rad/s; \
                 the near-resonance susceptibility is inaccurate",
                self.gamma,
                self.omega_m
            );
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.n_atoms as f64 * self.m_atom
    }

    /// rms ground-state momentum, sqrt(ħ m ω_m / 2).
    pub fn p_ho(&self) -> f64 {
        (HBAR * self.mass() * self.omega_m / 2.0).sqrt()
    }

    /// Ground-state length, sqrt(ħ / (2 m ω_m)).
    pub fn z_ho(&self) -> f64 {
        (HBAR / (2.0 * self.mass() * self.omega_m)).sqrt()
    }

    /// Zero-point force noise unit 2Γp_HO², N²/Hz.
    pub fn zpm(&self) -> f64 {
        2.0 * self.gamma * self.p_ho().powi(2)
    }
}

pub(crate) fn positive(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be > 0, got {value}")))
    }
}
