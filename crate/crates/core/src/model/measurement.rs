use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::constants::{angular, C_LIGHT, HBAR};
use super::oscillator::positive;
use crate::{Error, Result};

/// Probe and detection settings for one measurement configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    /// Photodetection efficiency, in (0, 1].
    pub epsilon_det: f64,
    /// Heterodyne detection halves the effective efficiency.
    pub heterodyne: bool,
    /// Optomechanical cooperativity C_om.
    pub cooperativity: f64,
    /// Cavity linewidth parameter κ, rad/s. Only used by the cavity filter.
    pub kappa: Option<f64>,
    /// Apply the κ²/(κ²+ω²) filter instead of the resolved-sideband form.
    pub cavity_filter: bool,
    /// Total shot-noise PSD S_SN, W²/Hz.
    pub s_sn: f64,
    /// Measurement window τ, s.
    pub tau: f64,
    /// Fourier bin width ω_BW, rad/s.
    pub omega_bw: f64,
    /// Local oscillator power, W.
    pub p_lo: Option<f64>,
    /// Probe angular frequency, rad/s.
    pub omega_0: Option<f64>,
}

impl MeasurementConfig {
    pub fn new(
        epsilon_det: f64,
        heterodyne: bool,
        cooperativity: f64,
        s_sn: f64,
        tau: f64,
    ) -> Result<Self> {
        let cfg = Self {
            epsilon_det,
            heterodyne,
            cooperativity,
            kappa: None,
            cavity_filter: false,
            s_sn,
            tau,
            omega_bw: 2.0 * PI / tau,
            p_lo: None,
            omega_0: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shot-noise level set by the local oscillator, S_SN = P_LO ħ ω_0.
    pub fn from_local_oscillator(
        epsilon_det: f64,
        heterodyne: bool,
        cooperativity: f64,
        p_lo: f64,
        omega_0: f64,
        tau: f64,
    ) -> Result<Self> {
        positive("p_lo", p_lo)?;
        positive("omega_0", omega_0)?;
        let mut cfg = Self::new(
            epsilon_det,
            heterodyne,
            cooperativity,
            p_lo * HBAR * omega_0,
            tau,
        )?;
        cfg.p_lo = Some(p_lo);
        cfg.omega_0 = Some(omega_0);
        Ok(cfg)
    }

    /// 11.2% detection efficiency (ε = 0.056 after heterodyne halving), 1 mW local
    /// oscillator at 780 nm, 1 ms window.
    pub fn reference(cooperativity: f64) -> Self {
        Self::from_local_oscillator(
            0.112,
            true,
            cooperativity,
            1e-3,
            angular(C_LIGHT / 780.24e-9),
            1e-3,
        )
        .expect("reference measurement parameters are valid")
    }

    pub fn with_cooperativity(mut self, cooperativity: f64) -> Self {
        self.cooperativity = cooperativity;
        self
    }

    /// ε entering the sensitivity formulas.
    pub fn epsilon_eff(&self) -> f64 {
        if self.heterodyne {
            self.epsilon_det / 2.0
        } else {
            self.epsilon_det
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_det > 0.0 && self.epsilon_det <= 1.0) {
            return Err(Error::invalid(
                "epsilon_det",
                format!("must lie in (0, 1], got {}", self.epsilon_det),
            ));
        }
        if !(self.cooperativity.is_finite() && self.cooperativity >= 0.0) {
            return Err(Error::invalid(
                "cooperativity",
                format!("must be >= 0, got {}", self.cooperativity),
            ));
        }
        positive("s_sn", self.s_sn)?;
        positive("tau", self.tau)?;
        positive("omega_bw", self.omega_bw)?;
        if let Some(kappa) = self.kappa {
            positive("kappa", kappa)?;
        }
        if self.cavity_filter && self.kappa.is_none() {
            return Err(Error::invalid("kappa", "required when cavity_filter is set"));
        }
        if let (Some(p_lo), Some(omega_0)) = (self.p_lo, self.omega_0) {
            let expected = p_lo * HBAR * omega_0;
            if ((self.s_sn - expected) / expected).abs() > 1e-12 {
                return Err(Error::invalid(
                    "s_sn",
                    format!("{} disagrees with P_LO ħ ω_0 = {expected}", self.s_sn),
                ));
            }
        }
        Ok(())
    }
}

/// Applied modulated dipole force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Static dipole force per atom, N.
    pub f_static_per_atom: f64,
    pub mod_index: f64,
    /// Drive angular frequency, rad/s.
    pub omega_d: f64,
    /// Initial drive phase, rad.
    pub phase: f64,
    /// Force amplitude F₀ on the whole oscillator, N.
    pub f0: f64,
}

impl DriveConfig {
    pub fn new(
        n_atoms: u64,
        f_static_per_atom: f64,
        mod_index: f64,
        omega_d: f64,
        phase: f64,
    ) -> Result<Self> {
        let drive = Self {
            f_static_per_atom,
            mod_index,
            omega_d,
            phase,
            f0: n_atoms as f64 * f_static_per_atom * mod_index,
        };
        drive.validate()?;
        Ok(drive)
    }

    /// 6.2e-21 N per atom with modulation index 2e-3, driven at `omega_d`.
    pub fn reference(n_atoms: u64, omega_d: f64) -> Self {
        Self::new(n_atoms, 6.2e-21, 2e-3, omega_d, 0.0).expect("reference drive parameters are valid")
    }

    pub fn with_mod_index(self, n_atoms: u64, mod_index: f64) -> Result<Self> {
        Self::new(
            n_atoms,
            self.f_static_per_atom,
            mod_index,
            self.omega_d,
            self.phase,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f0.is_finite() && self.f0 >= 0.0) {
            return Err(Error::invalid("f0", format!("must be >= 0, got {}", self.f0)));
        }
        positive("omega_d", self.omega_d)?;
        if !self.phase.is_finite() {
            return Err(Error::invalid("phase", "must be finite"));
        }
        Ok(())
    }
}
