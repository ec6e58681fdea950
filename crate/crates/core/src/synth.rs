//! Seeded Monte Carlo synthesis of heterodyne spectra.
//!
//! Synthesis works directly in the Fourier domain: every bin of a repetition
//! is an independent circular complex Gaussian around the driven mean, and
//! averaged noise spectra are drawn from their exact scaled chi-squared law.
//!
//! Random streams: every (kind, scan index, repetition) triple owns one
//! ChaCha8 stream, `seed_from_u64(seed)` with
//! `stream = kind << 60 | scan << 32 | repetition`. Bins are consumed in
//! grid order within that stream, two standard normals per bin for complex
//! samples and one gamma variate per bin for averaged spectra.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::constants::M_RB87;
use crate::model::{
    heterodyne_psd_pm, recoil_splitting, transduction, uniform_grid, ComplexSpectrum, DriveConfig,
    MeasurementConfig, MechanicalOscillator, PowerSpectrum,
};
use crate::{Error, Result};

const STREAM_COHERENT: u64 = 1;
const STREAM_PSD: u64 = 2;

/// Trap wavenumber of the 850 nm lattice light.
pub const TRAP_WAVENUMBER: f64 = 2.0 * std::f64::consts::PI / 850e-9;

/// Populated levels of the anharmonic trap. Level `k` resonates at
/// `ω_m − k·splitting`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnharmonicLadder {
    pub n_peaks: usize,
    /// Level spacing reduction Δω_m, rad/s.
    pub splitting: f64,
    pub level_fractions: Vec<f64>,
    pub coupling_scale: Vec<f64>,
}

impl AnharmonicLadder {
    /// Three levels split by the 850 nm recoil frequency holding 97/2/1 % of
    /// the atoms.
    pub fn reference() -> Self {
        Self {
            n_peaks: 3,
            splitting: recoil_splitting(TRAP_WAVENUMBER, M_RB87).expect("positive inputs"),
            level_fractions: vec![0.97, 0.02, 0.01],
            coupling_scale: vec![1.0; 3],
        }
    }

    /// A perfectly harmonic trap.
    pub fn single() -> Self {
        Self {
            n_peaks: 1,
            splitting: recoil_splitting(TRAP_WAVENUMBER, M_RB87).expect("positive inputs"),
            level_fractions: vec![1.0],
            coupling_scale: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_peaks == 0 {
            return Err(Error::invalid("n_peaks", "must be at least 1"));
        }
        if self.level_fractions.len() != self.n_peaks {
            return Err(Error::invalid(
                "level_fractions",
                format!("expected {} entries", self.n_peaks),
            ));
        }
        if self.coupling_scale.len() != self.n_peaks {
            return Err(Error::invalid(
                "coupling_scale",
                format!("expected {} entries", self.n_peaks),
            ));
        }
        if !(self.splitting.is_finite() && self.splitting > 0.0) {
            return Err(Error::invalid("splitting", "must be > 0"));
        }
        if self.level_fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::invalid("level_fractions", "must be non-negative"));
        }
        let sum: f64 = self.level_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "level_fractions",
                format!("must sum to 1, got {sum}"),
            ));
        }
        if self.level_fractions[1..]
            .iter()
            .any(|f| *f >= self.level_fractions[0])
        {
            return Err(Error::invalid(
                "level_fractions",
                "ground level must hold the largest fraction",
            ));
        }
        if self.coupling_scale.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("coupling_scale", "must be non-negative"));
        }
        Ok(())
    }

    /// Peak weights relative to the ground level (whose weight is 1).
    pub fn relative_weights(&self) -> Vec<f64> {
        let f0 = self.level_fractions[0];
        self.level_fractions
            .iter()
            .zip(&self.coupling_scale)
            .map(|(f, c)| f / f0 * c / self.coupling_scale[0])
            .collect()
    }

    pub fn centers(&self, omega_m: f64) -> Vec<f64> {
        (0..self.n_peaks)
            .map(|k| omega_m - k as f64 * self.splitting)
            .collect()
    }
}

/// Normalized complex Lorentzian (Γ/2)/(Δ + iΓ/2): modulus
/// sqrt((Γ/2)²/(Δ²+(Γ/2)²)), phase −atan2(Γ/2, Δ).
pub fn lorentzian_response(delta: f64, gamma: f64) -> Complex64 {
    let h = gamma / 2.0;
    Complex64::new(h, 0.0) / Complex64::new(delta, h)
}

/// Real Lorentzian (Γ/2)²/(Δ² + (Γ/2)²).
pub fn lorentzian_power(delta: f64, gamma: f64) -> f64 {
    let h2 = (gamma / 2.0).powi(2);
    h2 / (delta * delta + h2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub osc: MechanicalOscillator,
    pub meas: MeasurementConfig,
    pub drive: DriveConfig,
    pub ladder: AnharmonicLadder,
    /// Angular-frequency grid, spacing ω_BW.
    pub freq_grid: Vec<f64>,
    pub n_reps: usize,
    pub seed: u64,
    /// Number of independent n_reps-averaged noise records pooled into the
    /// synthesized noise PSD.
    pub psd_records: usize,
    /// When false, outputs are the noiseless expectations.
    pub noise: bool,
}

impl SynthConfig {
    pub fn new(
        osc: MechanicalOscillator,
        meas: MeasurementConfig,
        drive: DriveConfig,
        ladder: AnharmonicLadder,
        n_reps: usize,
        seed: u64,
    ) -> Result<Self> {
        let freq_grid = Self::default_grid(&osc, &meas, &ladder);
        let cfg = Self {
            osc,
            meas,
            drive,
            ladder,
            freq_grid,
            n_reps,
            seed,
            psd_records: 1,
            noise: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Grid of ω_BW-spaced bins centred on ω_m covering ±5Γ plus the
    /// red-detuned secondary peaks.
    pub fn default_grid(
        osc: &MechanicalOscillator,
        meas: &MeasurementConfig,
        ladder: &AnharmonicLadder,
    ) -> Vec<f64> {
        let step = meas.omega_bw;
        let span = (5.0 * osc.gamma / step).ceil() as usize;
        let red = ((ladder.n_peaks.saturating_sub(1)) as f64 * ladder.splitting / step).ceil() as usize;
        uniform_grid(osc.omega_m, step, span + red, span)
    }

    pub fn validate(&self) -> Result<()> {
        self.osc.validate()?;
        self.meas.validate()?;
        self.drive.validate()?;
        self.ladder.validate()?;
        if self.n_reps == 0 {
            return Err(Error::invalid("n_reps", "must be at least 1"));
        }
        if self.psd_records == 0 {
            return Err(Error::invalid("psd_records", "must be at least 1"));
        }
        if self.freq_grid.is_empty() {
            return Err(Error::invalid("freq_grid", "grid is empty"));
        }
        // reuse the spectrum grid checks
        PowerSpectrum::new(self.freq_grid.clone(), vec![0.0; self.freq_grid.len()], 1)
            .map_err(|e| Error::invalid("freq_grid", e.to_string()))?;
        if self.freq_grid.len() > 1 {
            let step = (self.freq_grid[self.freq_grid.len() - 1] - self.freq_grid[0])
                / (self.freq_grid.len() - 1) as f64;
            if ((step - self.meas.omega_bw) / self.meas.omega_bw).abs() > 1e-6 {
                return Err(Error::invalid(
                    "freq_grid",
                    format!("spacing {step} differs from ω_BW {}", self.meas.omega_bw),
                ));
            }
        }
        let lo = self.freq_grid[0];
        let hi = self.freq_grid[self.freq_grid.len() - 1];
        let reach = 5.0 * self.osc.gamma * (1.0 - 1e-9);
        if lo > self.osc.omega_m - reach || hi < self.osc.omega_m + reach {
            return Err(Error::invalid("freq_grid", "grid must span ±5Γ around ω_m"));
        }
        Ok(())
    }

    /// Transduction scale of the ground-level peak, |T_sig(ω_m)|, W/N.
    pub fn peak_transduction(&self) -> f64 {
        transduction(&self.osc, &self.meas, self.osc.omega_m)
    }

    /// Noiseless complex transduction Σ_k w_k A_sig e^{iφ_k(ω)}·|…|, W/N,
    /// without the drive phase.
    pub fn expected_transduction(&self, omega: f64) -> Complex64 {
        let a0 = self.peak_transduction();
        self.ladder
            .centers(self.osc.omega_m)
            .iter()
            .zip(self.ladder.relative_weights())
            .map(|(wk, weight)| lorentzian_response(omega - wk, self.osc.gamma) * (a0 * weight))
            .sum()
    }

    /// Noiseless driven response F₀ e^{iθ} T(ω), W.
    pub fn expected_response(&self, omega: f64) -> Complex64 {
        self.expected_transduction(omega)
            * Complex64::from_polar(self.drive.f0, self.drive.phase)
    }

    /// Undriven heterodyne PSD summed over the ladder, W²/Hz.
    pub fn expected_psd(&self, omega: f64) -> f64 {
        let floor = self.meas.s_sn / 2.0;
        let excess: f64 = self
            .ladder
            .centers(self.osc.omega_m)
            .iter()
            .zip(self.ladder.relative_weights())
            .map(|(wk, weight)| {
                let level = MechanicalOscillator {
                    omega_m: *wk,
                    ..self.osc
                };
                weight * (heterodyne_psd_pm(&level, &self.meas, omega) - floor)
            })
            .sum();
        floor + excess
    }

    /// Per-quadrature variance of one repetition's complex value, W².
    pub fn bin_variance(&self, omega: f64) -> f64 {
        self.expected_psd(omega) / self.meas.tau
    }

    fn stream(&self, kind: u64, scan: usize, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(kind << 60 | (scan as u64) << 32 | rep as u64);
        rng
    }

    fn repetition<F>(&self, scan: usize, rep: usize, mean: F) -> ComplexSpectrum
    where
        F: Fn(usize, f64) -> Complex64,
    {
        let mut rng = self.stream(STREAM_COHERENT, scan, rep);
        let values = self
            .freq_grid
            .iter()
            .enumerate()
            .map(|(b, &w)| {
                let mut v = mean(b, w);
                if self.noise {
                    let sigma = self.bin_variance(w).sqrt();
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    v += Complex64::new(re, im) * sigma;
                }
                v
            })
            .collect();
        ComplexSpectrum {
            freqs: self.freq_grid.clone(),
            values,
            n_avg: 1,
            variance: None,
        }
    }
}

/// One repetition set per drive frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveScanPoint {
    pub offset: f64,
    pub omega_d: f64,
    /// Grid bin carrying the driven response.
    pub bin: usize,
    pub reps: Vec<ComplexSpectrum>,
}

/// Driven response on every grid bin, as stitched from a drive scan, one
/// spectrum per repetition.
pub fn synth_coherent(cfg: &SynthConfig) -> Result<Vec<ComplexSpectrum>> {
    cfg.validate()?;
    Ok((0..cfg.n_reps)
        .map(|r| cfg.repetition(0, r, |_, w| cfg.expected_response(w)))
        .collect())
}

/// Undriven noise PSD averaged over `n_reps * psd_records` windows.
pub fn synth_noise_psd(cfg: &SynthConfig) -> Result<PowerSpectrum> {
    synth_noise_psd_stream(cfg, 0)
}

/// As [`synth_noise_psd`] with an explicit scan index selecting the stream.
pub fn synth_noise_psd_stream(cfg: &SynthConfig, scan: usize) -> Result<PowerSpectrum> {
    cfg.validate()?;
    let n_avg = cfg.n_reps * cfg.psd_records;
    let expectation: Vec<f64> = cfg.freq_grid.iter().map(|&w| cfg.expected_psd(w)).collect();
    let values = if cfg.noise {
        let mut rng = cfg.stream(STREAM_PSD, scan, 0);
        // mean of n exponential periodogram ordinates: Gamma(n, mean/n)
        let n = n_avg as f64;
        let gamma = Gamma::new(n, 1.0 / n).expect("positive shape");
        expectation
            .iter()
            .map(|e| e * gamma.sample(&mut rng))
            .collect()
    } else {
        expectation
    };
    PowerSpectrum::new(cfg.freq_grid.clone(), values, n_avg)
}

/// Monochromatic drives at `ω_m + offset`; each offset yields a repetition
/// set whose driven response sits in the bin nearest the drive frequency.
/// Offset `i` uses scan stream `i`, so the first offset shares its noise
/// with [`synth_coherent`].
pub fn drive_scan(cfg: &SynthConfig, offsets: &[f64]) -> Result<Vec<DriveScanPoint>> {
    cfg.validate()?;
    let grid = PowerSpectrum {
        freqs: cfg.freq_grid.clone(),
        values: vec![],
        n_avg: 1,
    };
    offsets
        .iter()
        .enumerate()
        .map(|(i, &offset)| {
            if !offset.is_finite() {
                return Err(Error::invalid("offsets", "must be finite"));
            }
            let omega_d = cfg.osc.omega_m + offset;
            let bin = grid.nearest_bin(omega_d).ok_or(Error::MissingBin(omega_d))?;
            let signal = cfg.expected_response(omega_d);
            let reps = (0..cfg.n_reps)
                .map(|r| {
                    cfg.repetition(i, r, |b, _| {
                        if b == bin {
                            signal
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                })
                .collect();
            Ok(DriveScanPoint {
                offset,
                omega_d,
                bin,
                reps,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::constants::angular;

    fn config(c: f64, n_reps: usize, seed: u64) -> SynthConfig {
        let osc = MechanicalOscillator::reference();
        SynthConfig::new(
            osc,
            MeasurementConfig::reference(c),
            DriveConfig::reference(osc.n_atoms, osc.omega_m),
            AnharmonicLadder::reference(),
            n_reps,
            seed,
        )
        .unwrap()
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn lorentzian_response_phase() {
        let g = angular(3e3);
        assert!((lorentzian_response(0.0, g).arg().to_degrees() + 90.0).abs() < 1e-12);
        for d in [1e2, 5e3, 4e4] {
            let phi = lorentzian_response(d, g).arg();
            assert!((phi + ((g / 2.0) / d).atan()).abs() < 1e-12);
            assert!((lorentzian_response(d, g).norm_sqr() - lorentzian_power(d, g)).abs() < 1e-15);
        }
    }

    #[test]
    fn default_ladder_is_valid() {
        let l = AnharmonicLadder::reference();
        l.validate().unwrap();
        let w = l.relative_weights();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.02 / 0.97).abs() < 1e-15);
        let bad = AnharmonicLadder {
            level_fractions: vec![0.5, 0.3, 0.3],
            ..l.clone()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn secondary_peaks_red_detuned_by_multiples_of_splitting() {
        let cfg = config(2.0, 1, 1);
        let centers = cfg.ladder.centers(cfg.osc.omega_m);
        for (k, c) in centers.iter().enumerate() {
            assert_eq!(*c, cfg.osc.omega_m - k as f64 * cfg.ladder.splitting);
        }
    }

    #[test]
    fn rejects_empty_inputs() {
        let mut cfg = config(2.0, 1, 1);
        cfg.n_reps = 0;
        assert!(synth_coherent(&cfg).is_err());
        let mut cfg = config(2.0, 1, 1);
        cfg.freq_grid.clear();
        assert!(synth_coherent(&cfg).is_err());
        assert!(synth_noise_psd(&cfg).is_err());
    }

    #[test]
    fn noiseless_output_is_the_model() {
        let mut cfg = config(2.0, 2, 5);
        cfg.noise = false;
        cfg.ladder = AnharmonicLadder::single();
        cfg.freq_grid = SynthConfig::default_grid(&cfg.osc, &cfg.meas, &cfg.ladder);
        let reps = synth_coherent(&cfg).unwrap();
        let t0 = transduction(&cfg.osc, &cfg.meas, cfg.osc.omega_m);
        for (w, v) in reps[0].freqs.iter().zip(&reps[0].values) {
            let model = lorentzian_response(w - cfg.osc.omega_m, cfg.osc.gamma) * t0 * cfg.drive.f0;
            assert!((v - model).norm() <= 1e-12 * model.norm());
            // modulus follows the transduction closed form
            let t = transduction(&cfg.osc, &cfg.meas, *w) * cfg.drive.f0;
            assert!((v.norm() / t - 1.0).abs() < 1e-12);
        }
        let psd = synth_noise_psd(&cfg).unwrap();
        for (w, v) in psd.freqs.iter().zip(&psd.values) {
            let exact = heterodyne_psd_pm(&cfg.osc, &cfg.meas, *w);
            assert!((v / exact - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = config(2.0, 5, 42);
        assert_eq!(synth_coherent(&cfg).unwrap(), synth_coherent(&cfg).unwrap());
        assert_eq!(synth_noise_psd(&cfg).unwrap(), synth_noise_psd(&cfg).unwrap());
        let other = config(2.0, 5, 43);
        assert_ne!(synth_coherent(&cfg).unwrap(), synth_coherent(&other).unwrap());
    }

    #[test]
    fn shot_noise_only_statistics() {
        let mut cfg = config(0.0, 4000, 7);
        cfg.drive.f0 = 0.0;
        let reps = synth_coherent(&cfg).unwrap();
        let floor = cfg.meas.s_sn / 2.0;
        let n = reps.len() as f64;
        for b in [0, 10, 30] {
            let mean: Complex64 = reps.iter().map(|r| r.values[b]).sum::<Complex64>() / n;
            let var_re = reps.iter().map(|r| (r.values[b].re - mean.re).powi(2)).sum::<f64>() / (n - 1.0);
            let expected = floor / cfg.meas.tau;
            let se = (expected / n).sqrt();
            assert!(mean.re.abs() < 4.0 * se && mean.im.abs() < 4.0 * se);
            // relative sd of a sample variance is sqrt(2/(n-1))
            assert!((var_re / expected - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        }
    }

    #[test]
    fn ensemble_mean_converges_to_transduction() {
        let cfg = config(2.0, 150, 11);
        let reps = synth_coherent(&cfg).unwrap();
        let avg = ComplexSpectrum::average(&reps).unwrap();
        let b = avg.nearest_bin(cfg.osc.omega_m).unwrap();
        let model = cfg.expected_response(cfg.osc.omega_m);
        let se = (cfg.bin_variance(cfg.osc.omega_m) / 150.0).sqrt();
        assert!((avg.values[b] - model).norm() < 3.0 * se * 2f64.sqrt());
        // primary term alone: T_sig(ω_m) F₀, plus the small secondary tails
        let t = transduction(&cfg.osc, &cfg.meas, cfg.osc.omega_m) * cfg.drive.f0;
        assert!((avg.values[b].norm() - t).abs() < 3.0 * se + (model.norm() - t).abs());
    }

    #[test]
    fn bin_variance_matches_psd_over_window() {
        let cfg = config(3.0, 3000, 3);
        let reps = synth_coherent(&cfg).unwrap();
        let avg = ComplexSpectrum::average(&reps).unwrap();
        let var = avg.variance.unwrap();
        for (b, w) in cfg.freq_grid.iter().enumerate() {
            let expected = cfg.bin_variance(*w) / 3000.0;
            assert!((var[b] / expected - 1.0).abs() < 5.0 / (3000f64).sqrt(), "bin {b}");
        }
    }

    #[test]
    fn averaged_psd_converges() {
        let mut cfg = config(4.0, 500, 9);
        cfg.psd_records = 4;
        let psd = synth_noise_psd(&cfg).unwrap();
        assert_eq!(psd.n_avg, 2000);
        let tol = 3.0 / (2000f64).sqrt();
        let mut outside = 0;
        for (w, v) in psd.freqs.iter().zip(&psd.values) {
            if (v / cfg.expected_psd(*w) - 1.0).abs() > tol {
                outside += 1;
            }
        }
        // 3σ per bin: allow at most one excursion over the grid
        assert!(outside <= 1, "{outside} bins outside 3σ");
    }

    #[test]
    fn zero_cooperativity_is_flat() {
        let mut cfg = config(0.0, 10, 1);
        cfg.noise = false;
        let psd = synth_noise_psd(&cfg).unwrap();
        assert!(psd.values.iter().all(|v| *v == cfg.meas.s_sn / 2.0));
    }

    #[test]
    fn single_window_periodogram_is_exponential() {
        let mut draws = Vec::new();
        for seed in 0..270 {
            let cfg = config(2.0, 1, seed);
            let psd = synth_noise_psd(&cfg).unwrap();
            draws.extend(psd.freqs.iter().zip(&psd.values).map(|(w, v)| v / cfg.expected_psd(*w)));
        }
        let n = draws.len();
        assert!(n >= 10_000);
        let d = ks_statistic(draws, |x| 1.0 - (-x).exp());
        assert!(d < 1.628 / (n as f64).sqrt(), "KS D = {d}");
    }

    #[test]
    fn drive_scan_peaks_on_resonance() {
        let cfg = config(2.0, 20, 5);
        let offsets: Vec<f64> = (-3..=3).map(|k| angular(1e3) * k as f64).collect();
        let scan = drive_scan(&cfg, &offsets).unwrap();
        let mags: Vec<f64> = scan
            .iter()
            .map(|p| ComplexSpectrum::average(&p.reps).unwrap().values[p.bin].norm())
            .collect();
        let best = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(offsets[best], 0.0);
        assert_eq!(drive_scan(&cfg, &offsets).unwrap(), scan);
    }

    #[test]
    fn single_offset_scan_matches_coherent_at_resonance() {
        let cfg = config(2.0, 8, 21);
        let scan = drive_scan(&cfg, &[0.0]).unwrap();
        let coherent = synth_coherent(&cfg).unwrap();
        let b = scan[0].bin;
        for (s, c) in scan[0].reps.iter().zip(&coherent) {
            assert_eq!(s.values[b], c.values[b]);
        }
    }
}
