//! Run configuration: TOML with one table per block, frequencies in Hz.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use yoctoforce::model::constants::{angular, C_LIGHT, M_RB87};
use yoctoforce::synth::{AnharmonicLadder, SynthConfig, TRAP_WAVENUMBER};
use yoctoforce::{DriveConfig, MeasurementConfig, MechanicalOscillator};

pub const DEFAULT_SEED: u64 = 20_141_107;
pub const SEED_ENV: &str = "YF_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorBlock {
    pub n_atoms: u64,
    /// Mass per atom, kg.
    pub m_atom: f64,
    pub omega_m_hz: f64,
    pub gamma_hz: f64,
    pub nu: f64,
}

impl Default for OscillatorBlock {
    fn default() -> Self {
        Self {
            n_atoms: 1200,
            m_atom: M_RB87,
            omega_m_hz: 110e3,
            gamma_hz: 3e3,
            nu: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementBlock {
    pub epsilon_det: f64,
    pub heterodyne: bool,
    /// Local oscillator power, W.
    pub p_lo: f64,
    /// Probe wavelength, m.
    pub wavelength: f64,
    /// Fourier window, s.
    pub tau: f64,
    pub kappa_hz: Option<f64>,
    pub cavity_filter: bool,
}

impl Default for MeasurementBlock {
    fn default() -> Self {
        Self {
            epsilon_det: 0.112,
            heterodyne: true,
            p_lo: 1e-3,
            wavelength: 780.24e-9,
            tau: 1e-3,
            kappa_hz: None,
            cavity_filter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveBlock {
    /// Static dipole force per atom, N.
    pub f_static_per_atom: f64,
    pub mod_index: f64,
    /// Initial drive phase, rad.
    pub phase: f64,
}

impl Default for DriveBlock {
    fn default() -> Self {
        Self {
            f_static_per_atom: 6.2e-21,
            mod_index: 2e-3,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderBlock {
    /// Population of each trap level, ground level first.
    pub level_fractions: Vec<f64>,
    /// Relative optomechanical coupling of each level.
    pub coupling_scale: Vec<f64>,
    /// Level spacing, Hz; the lattice recoil frequency when absent.
    pub splitting_hz: Option<f64>,
}

impl Default for LadderBlock {
    fn default() -> Self {
        let reference = AnharmonicLadder::reference();
        Self {
            level_fractions: reference.level_fractions,
            coupling_scale: reference.coupling_scale,
            splitting_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub c_min: f64,
    pub c_max: f64,
    pub points: usize,
    /// Explicit cooperativities; overrides the log-spaced grid.
    pub values: Option<Vec<f64>>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            c_min: 0.1,
            c_max: 20.0,
            points: 16,
            values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseBlock {
    pub cooperativities: Vec<f64>,
    pub confidence: f64,
    /// Cooperativities of the force-noise spectra.
    pub spectra: Vec<f64>,
}

impl Default for PhaseBlock {
    fn default() -> Self {
        Self {
            cooperativities: vec![0.2, 1.9, 14.0],
            confidence: 0.5,
            spectra: vec![0.4, 1.9, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisBlock {
    pub n_reps: usize,
    /// Independent `n_reps`-window noise records pooled per PSD.
    pub psd_records: usize,
    pub seed: Option<u64>,
    /// Relative atom-number calibration uncertainty.
    pub atom_number_rel: f64,
}

impl Default for SynthesisBlock {
    fn default() -> Self {
        Self {
            n_reps: 150,
            psd_records: 10,
            seed: None,
            atom_number_rel: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: String,
    pub plots: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub oscillator: OscillatorBlock,
    pub measurement: MeasurementBlock,
    pub drive: DriveBlock,
    pub ladder: LadderBlock,
    pub sweep: SweepBlock,
    pub phase: PhaseBlock,
    pub synthesis: SynthesisBlock,
    pub output: OutputBlock,
}

fn check(ok: bool, field: &str, reason: impl std::fmt::Display) -> anyhow::Result<()> {
    if !ok {
        bail!("invalid {field}: {reason}");
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// `--seed` first, then the config file, then `YF_SEED`, then the
    /// built-in default.
    pub fn resolve_seed(&self, cli: Option<u64>, env: Option<&str>) -> anyhow::Result<u64> {
        if let Some(seed) = cli.or(self.synthesis.seed) {
            return Ok(seed);
        }
        match env {
            Some(text) => text
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={text:?} is not an unsigned integer")),
            None => Ok(DEFAULT_SEED),
        }
    }

    /// Checks every block by building the library types from it.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.oscillator()?;
        self.measurement(1.0)?;
        self.drive()?;
        self.ladder()?;
        let s = &self.sweep;
        check(s.points >= 1, "sweep.points", "must be at least 1")?;
        check(
            s.c_min > 0.0 && s.c_max >= s.c_min && s.c_max.is_finite(),
            "sweep.c_min/c_max",
            format!("need 0 < c_min <= c_max, got {} and {}", s.c_min, s.c_max),
        )?;
        for (field, list) in [
            ("sweep.values", s.values.clone().unwrap_or_default()),
            ("phase.cooperativities", self.phase.cooperativities.clone()),
            ("phase.spectra", self.phase.spectra.clone()),
        ] {
            if let Some(c) = list.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
                bail!("invalid {field}: cooperativity {c} must be > 0");
            }
        }
        check(
            self.phase.confidence > 0.0 && self.phase.confidence < 1.0,
            "phase.confidence",
            "must lie in (0, 1)",
        )?;
        check(self.synthesis.n_reps >= 3, "synthesis.n_reps", "must be at least 3")?;
        check(self.synthesis.psd_records >= 1, "synthesis.psd_records", "must be at least 1")?;
        check(
            self.synthesis.atom_number_rel >= 0.0 && self.synthesis.atom_number_rel.is_finite(),
            "synthesis.atom_number_rel",
            "must be >= 0",
        )?;
        Ok(())
    }

    pub fn oscillator(&self) -> anyhow::Result<MechanicalOscillator> {
        let o = &self.oscillator;
        MechanicalOscillator::new(
            o.n_atoms,
            o.m_atom,
            angular(o.omega_m_hz),
            angular(o.gamma_hz),
            o.nu,
        )
        .context("invalid oscillator block")
    }

    pub fn measurement(&self, cooperativity: f64) -> anyhow::Result<MeasurementConfig> {
        let m = &self.measurement;
        check(m.wavelength > 0.0, "measurement.wavelength", "must be > 0")?;
        let omega_0 = 2.0 * std::f64::consts::PI * C_LIGHT / m.wavelength;
        let mut meas = MeasurementConfig::from_local_oscillator(
            m.epsilon_det,
            m.heterodyne,
            cooperativity,
            m.p_lo,
            omega_0,
            m.tau,
        )
        .context("invalid measurement block")?;
        meas.kappa = m.kappa_hz.map(angular);
        meas.cavity_filter = m.cavity_filter;
        meas.validate().context("invalid measurement block")?;
        Ok(meas)
    }

    pub fn drive(&self) -> anyhow::Result<DriveConfig> {
        let osc = self.oscillator()?;
        let d = &self.drive;
        DriveConfig::new(
            osc.n_atoms,
            d.f_static_per_atom,
            d.mod_index,
            osc.omega_m,
            d.phase,
        )
        .context("invalid drive block")
    }

    pub fn ladder(&self) -> anyhow::Result<AnharmonicLadder> {
        let l = &self.ladder;
        let splitting = match l.splitting_hz {
            Some(hz) => angular(hz),
            None => yoctoforce::model::recoil_splitting(TRAP_WAVENUMBER, self.oscillator.m_atom)
                .context("invalid oscillator.m_atom")?,
        };
        let ladder = AnharmonicLadder {
            n_peaks: l.level_fractions.len(),
            splitting,
            level_fractions: l.level_fractions.clone(),
            coupling_scale: l.coupling_scale.clone(),
        };
        ladder.validate().context("invalid ladder block")?;
        Ok(ladder)
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        if let Some(values) = &self.sweep.values {
            return values.clone();
        }
        let s = &self.sweep;
        if s.points == 1 {
            return vec![s.c_min];
        }
        let (lo, hi) = (s.c_min.ln(), s.c_max.ln());
        (0..s.points)
            .map(|i| (lo + (hi - lo) * i as f64 / (s.points - 1) as f64).exp())
            .collect()
    }

    pub fn synth_config(&self, cooperativity: f64, seed: u64) -> anyhow::Result<SynthConfig> {
        let mut cfg = SynthConfig::new(
            self.oscillator()?,
            self.measurement(cooperativity)?,
            self.drive()?,
            self.ladder()?,
            self.synthesis.n_reps,
            seed,
        )?;
        cfg.psd_records = self.synthesis.psd_records;
        Ok(cfg)
    }
}

/// Seed of the `index`-th run of a batch labelled `batch`, so points of a
/// sweep draw independent noise.
pub fn point_seed(seed: u64, batch: u64, index: usize) -> u64 {
    let mut z = seed ^ batch.rotate_left(32) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
