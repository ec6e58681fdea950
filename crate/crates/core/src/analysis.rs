//! Headline quantities derived from fitted spectra: on-resonance force
//! sensitivity in SQL units, force-noise spectra, and phase-space
//! ensembles with their imprecision products.

use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::estimator::{JointFitModel, JointFitResult};
use crate::model::constants::HBAR;
use crate::model::{
    cooperativity_from_peak, force_sensitivity, ComplexSpectrum, MeasurementConfig,
    MechanicalOscillator, PowerSpectrum,
};
use crate::synth::lorentzian_power;
use crate::{Error, Estimate, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOptions {
    /// Relative calibration uncertainty of the atom number.
    pub atom_number_rel: f64,
    /// Use the configured S_SN instead of the fitted floor when inverting
    /// the peak ratio for the cooperativity.
    pub pin_shot_noise: bool,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self {
            atom_number_rel: 0.1,
            pin_shot_noise: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub cooperativity: Estimate,
    /// S_FF(ω_m)/S_FF^SQL; sigma includes the atom-number calibration term.
    pub s_ff_over_sql: Estimate,
    /// Fit-only part of the s_ff_over_sql uncertainty.
    pub s_ff_over_sql_stat: f64,
    /// S_FF(ω_m), N²/Hz.
    pub s_ff_abs: Estimate,
    /// Closed-form S_FF(ω_m)/SQL at the estimated cooperativity.
    pub theory_over_sql: f64,
    /// Measured minus closed-form ratio, with the fit-only uncertainty of
    /// the difference (both depend on the same fit).
    pub deviation: Estimate,
    pub omega_m: Estimate,
    pub gamma: Estimate,
}

impl SensitivityPoint {
    /// Deviation from the closed form in units of its uncertainty.
    pub fn pull(&self) -> f64 {
        self.deviation.value / self.deviation.sigma
    }
}

/// The two equivalent forms of S_FF(ω_m)/S_FF^SQL given the total noise
/// PSD at the peak (incoherent height plus shot-noise floor) and the
/// coherent peak amplitude:
///
/// - `peak / A_sig² / (4Γ p_HO²)`,
/// - `peak / A_sig² / (2Γ N m ħ ω_m)`.
pub fn sql_ratio_forms(
    peak_psd: f64,
    a_sig: f64,
    gamma: f64,
    omega_m: f64,
    osc: &MechanicalOscillator,
) -> (f64, f64) {
    let level = MechanicalOscillator {
        omega_m,
        gamma,
        ..*osc
    };
    let s_ff = peak_psd / (a_sig * a_sig);
    let first = s_ff / (4.0 * gamma * level.p_ho().powi(2));
    let second = s_ff / (2.0 * gamma * osc.n_atoms as f64 * osc.m_atom * HBAR * omega_m);
    (first, second)
}

/// Closed-form S_FF(ω_m)/S_FF^SQL, `[1/(4εC) + 2ν + 1 + C]/2`.
pub fn theory_ratio_on_resonance(cooperativity: f64, nu: f64, epsilon_eff: f64) -> f64 {
    (1.0 / (4.0 * epsilon_eff * cooperativity) + 2.0 * nu + 1.0 + cooperativity) / 2.0
}

fn peak_ratio(model: &JointFitModel, s_sn: Option<f64>) -> f64 {
    let a = model.noise_amplitude[0];
    match s_sn {
        Some(s) => (a + s / 2.0) / s,
        None => (a + model.floor) / (2.0 * model.floor),
    }
}

fn measured_ratio(model: &JointFitModel, osc: &MechanicalOscillator) -> f64 {
    let peak = model.noise_amplitude[0] + model.floor;
    sql_ratio_forms(peak, model.a_sig(0), model.gamma, model.omega_m, osc).0
}

/// On-resonance force sensitivity of the ground-level peak.
///
/// The secondary peaks of a ladder fit are excluded: the peak PSD is the
/// ground-level incoherent height plus the floor.
pub fn sensitivity_on_resonance(
    fit: &JointFitResult,
    osc: &MechanicalOscillator,
    meas: &MeasurementConfig,
    opts: &SensitivityOptions,
) -> Result<SensitivityPoint> {
    if !fit.converged() {
        return Err(Error::NotConverged);
    }
    let model = &fit.model;
    if !(model.a_sig(0) > 0.0) {
        return Err(Error::invalid("coherent", "fitted signal amplitude is zero"));
    }
    if !(model.floor > 0.0) && !opts.pin_shot_noise {
        return Err(Error::invalid("floor", "fitted shot-noise floor is zero"));
    }
    let nu = osc.nu;
    let eps = meas.epsilon_eff();
    let s_sn = opts.pin_shot_noise.then_some(meas.s_sn);

    let c = crate::estimator::estimate_cooperativity(fit, nu, eps, s_sn)?;
    let ratio = measured_ratio(model, osc);
    let theory = theory_ratio_on_resonance(c.value, nu, eps);

    let var = fit.propagate_with(|m| {
        let r = measured_ratio(m, osc);
        let c_m = cooperativity_from_peak(peak_ratio(m, s_sn), nu, eps).unwrap_or(f64::NAN);
        let s_abs = (m.noise_amplitude[0] + m.floor) / m.a_sig(0).powi(2);
        vec![r, r - theory_ratio_on_resonance(c_m, nu, eps), s_abs]
    });
    let stat = var[0].sqrt();
    let calibration = opts.atom_number_rel * ratio;
    let s_abs = (model.noise_amplitude[0] + model.floor) / model.a_sig(0).powi(2);

    Ok(SensitivityPoint {
        cooperativity: c,
        s_ff_over_sql: Estimate::new(ratio, stat.hypot(calibration)),
        s_ff_over_sql_stat: stat,
        s_ff_abs: Estimate::new(s_abs, var[2].sqrt()),
        theory_over_sql: theory,
        deviation: Estimate::new(ratio - theory, var[1].sqrt()),
        omega_m: fit.omega_m(),
        gamma: fit.gamma(),
    })
}

/// Force-noise spectral density with per-bin uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpectrum {
    pub freqs: Vec<f64>,
    /// S_FF(ω), N²/Hz.
    pub values: Vec<f64>,
    /// Counting noise of the PSD bin combined with the normalization
    /// uncertainty of the fit.
    pub sigma: Vec<f64>,
}

fn force_normalization(model: &JointFitModel, omega: f64, subtract: bool, psd: f64) -> f64 {
    let excess: f64 = if subtract {
        model
            .centers()
            .iter()
            .zip(&model.noise_amplitude)
            .skip(1)
            .map(|(wk, a)| a * lorentzian_power(omega - wk, model.gamma))
            .sum()
    } else {
        0.0
    };
    let a = model.a_sig(0);
    (psd - excess) / (a * a * lorentzian_power(omega - model.omega_m, model.gamma))
}

/// Divides the noise PSD by the fitted coherent response of the ground
/// level, `S_FF(ω) = S(ω)·[(ω−ω_m)² + (Γ/2)²] / (A_sig²(Γ/2)²)`.
///
/// With `subtract_secondaries` the fitted incoherent Lorentzians of the
/// higher ladder levels are removed from the PSD first.
pub fn sensitivity_spectrum(
    psd: &PowerSpectrum,
    fit: &JointFitResult,
    subtract_secondaries: bool,
) -> Result<SensitivitySpectrum> {
    if !fit.converged() {
        return Err(Error::NotConverged);
    }
    psd.validate()?;
    let model = &fit.model;
    if !(model.a_sig(0) > 0.0) {
        return Err(Error::invalid("coherent", "fitted signal amplitude is zero"));
    }
    let values: Vec<f64> = psd
        .freqs
        .iter()
        .zip(&psd.values)
        .map(|(w, p)| force_normalization(model, *w, subtract_secondaries, *p))
        .collect();
    let norm_var = fit.propagate_with(|m| {
        psd.freqs
            .iter()
            .zip(&psd.values)
            .map(|(w, p)| force_normalization(m, *w, subtract_secondaries, *p))
            .collect()
    });
    let root_n = (psd.n_avg as f64).sqrt();
    let sigma = psd
        .freqs
        .iter()
        .zip(&norm_var)
        .map(|(w, nv)| {
            // counting noise of the bin, from the fitted expectation
            let counting = force_normalization(model, *w, false, model.psd_at(*w)) / root_n;
            (counting * counting + nv).sqrt()
        })
        .collect();
    Ok(SensitivitySpectrum {
        freqs: psd.freqs.clone(),
        values,
        sigma,
    })
}

/// Covariance ellipse of a phase-space cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub confidence: f64,
    /// Semi-axes at the stated confidence, major first.
    pub radii: [f64; 2],
    /// Angle of the major axis from the Z₁ axis, radians.
    pub orientation: f64,
    /// RMS spread along the principal axes, major first.
    pub rms: [f64; 2],
    /// ⟨ΔZ₁⟩⟨ΔZ₂⟩ from the rms spreads.
    pub product: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceEnsemble {
    /// (Z₁, Z₂) per repetition in z_HO units.
    pub points: Vec<[f64; 2]>,
    pub mean: [f64; 2],
    /// Absent for fewer than three points or a collinear cloud.
    pub ellipse: Option<Ellipse>,
}

/// Chi-squared quantile for two degrees of freedom.
fn chi2_2dof_quantile(p: f64) -> f64 {
    -2.0 * (1.0 - p).ln()
}

/// Principal-axis decomposition of the sample covariance of `points`.
///
/// The standard error of the product assumes a Gaussian cloud.
pub fn covariance_ellipse(points: &[[f64; 2]], confidence: f64) -> Result<Ellipse> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence", "must lie in (0, 1)"));
    }
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateEnsemble(format!("{n} points, need at least 3")));
    }
    let nf = n as f64;
    let mean = points
        .iter()
        .fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / nf, acc[1] + p[1] / nf]);
    let mut cov = Matrix2::<f64>::zeros();
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[(i, j)] += d[i] * d[j] / (nf - 1.0);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let (l_major, l_minor) = (eig.eigenvalues[major], eig.eigenvalues[minor]);
    if !(l_minor > 1e-12 * l_major) {
        return Err(Error::DegenerateEnsemble("points are collinear".into()));
    }
    let axis = eig.eigenvectors.column(major);
    let mut orientation = axis[1].atan2(axis[0]);
    // an axis, not a direction
    if orientation > std::f64::consts::FRAC_PI_2 {
        orientation -= std::f64::consts::PI;
    } else if orientation <= -std::f64::consts::FRAC_PI_2 {
        orientation += std::f64::consts::PI;
    }
    let q = chi2_2dof_quantile(confidence);
    let rms = [l_major.sqrt(), l_minor.sqrt()];
    let product = rms[0] * rms[1];
    Ok(Ellipse {
        confidence,
        radii: [(l_major * q).sqrt(), (l_minor * q).sqrt()],
        orientation,
        rms,
        product: Estimate::new(product, product / (nf - 1.0).sqrt()),
    })
}

/// Displacement scale sqrt(ε S_SN C Γ), W per z_HO.
pub fn phase_space_scale(meas: &MeasurementConfig, gamma: f64) -> f64 {
    (meas.epsilon_eff() * meas.s_sn * meas.cooperativity * gamma).sqrt()
}

/// Per-repetition phase-space points from the bin closest to the fitted
/// resonance, rotated by `−drive_phase` and scaled to z_HO units with the
/// configured cooperativity and the fitted linewidth.
pub fn phase_space_points(
    reps: &[ComplexSpectrum],
    fit: &JointFitResult,
    meas: &MeasurementConfig,
    drive_phase: f64,
    confidence: f64,
) -> Result<PhaseSpaceEnsemble> {
    meas.validate()?;
    let omega_m = fit.model.omega_m;
    let scale = phase_space_scale(meas, fit.model.gamma);
    let rotation = Complex64::from_polar(1.0 / scale, -drive_phase);
    let points: Vec<[f64; 2]> = reps
        .iter()
        .map(|rep| {
            let bin = rep.nearest_bin(omega_m).ok_or(Error::MissingBin(omega_m))?;
            let z = rep.values[bin] * rotation;
            Ok([z.re, z.im])
        })
        .collect::<Result<_>>()?;
    let nf = points.len().max(1) as f64;
    let mean = points
        .iter()
        .fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / nf, acc[1] + p[1] / nf]);
    let ellipse = match covariance_ellipse(&points, confidence) {
        Ok(e) => Some(e),
        Err(Error::DegenerateEnsemble(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(PhaseSpaceEnsemble {
        points,
        mean,
        ellipse,
    })
}

/// Expected on-resonance imprecision product |χ(ω_m)|² S_FF(ω_m)/(τ z_HO²)
/// for a measurement window τ.
pub fn expected_phase_product(osc: &MechanicalOscillator, meas: &MeasurementConfig) -> Result<f64> {
    let s_ff = force_sensitivity(osc, meas, osc.omega_m)?;
    Ok(crate::model::position_imprecision_product(osc, s_ff, meas.tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit_joint, initial_guess, FitOptions, PeakLayout, Weighting};
    use crate::model::{
        force_sensitivity, sql_sensitivity, susceptibility, DriveConfig, MechanicalOscillator,
    };
    use crate::synth::{drive_scan, synth_coherent, synth_noise_psd, AnharmonicLadder, SynthConfig};

    fn config(meas: MeasurementConfig, ladder: AnharmonicLadder, noise: bool, n_reps: usize, seed: u64) -> SynthConfig {
        let osc = MechanicalOscillator::reference();
        let mut cfg = SynthConfig::new(
            osc,
            meas,
            DriveConfig::reference(osc.n_atoms, osc.omega_m),
            ladder,
            n_reps,
            seed,
        )
        .unwrap();
        cfg.noise = noise;
        cfg.psd_records = 10;
        cfg
    }

    fn fit(cfg: &SynthConfig, opts: &FitOptions) -> (JointFitResult, PowerSpectrum) {
        let reps = synth_coherent(cfg).unwrap();
        let coh = ComplexSpectrum::average(&reps).unwrap().scaled(1.0 / cfg.drive.f0);
        let psd = synth_noise_psd(cfg).unwrap();
        let layout = PeakLayout::ladder(cfg.ladder.n_peaks, cfg.ladder.splitting);
        let init = initial_guess(&coh, &psd, &layout).unwrap();
        (fit_joint(&coh, &psd, &init, opts).unwrap(), psd)
    }

    fn exact() -> FitOptions {
        FitOptions {
            weighting: Weighting::Uniform,
            scale_covariance: false,
            ..FitOptions::default()
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn ratio_forms_agree() {
        let osc = MechanicalOscillator::reference();
        for (peak, a, g, w) in [(1e-22, 4e11, 1.8e4, 6.9e5), (3.3e-20, 1e9, 1e3, 2e6), (1.0, 1.0, 1.0, 1.0)] {
            let (first, second) = sql_ratio_forms(peak, a, g, w, &osc);
            assert!(rel(first, second) < 1e-9);
        }
    }

    #[test]
    fn theory_ratio_matches_closed_forms() {
        let osc = MechanicalOscillator::reference();
        let meas = MeasurementConfig::reference(2.0);
        let direct = force_sensitivity(&osc, &meas, osc.omega_m).unwrap() / sql_sensitivity(&osc);
        let ratio = theory_ratio_on_resonance(2.0, osc.nu, meas.epsilon_eff());
        assert!(rel(ratio, direct) < 1e-12);
    }

    #[test]
    fn noiseless_on_resonance_point_is_exact() {
        let cfg = config(MeasurementConfig::reference(1.9), AnharmonicLadder::reference(), false, 1, 0);
        let (fit, _) = fit(&cfg, &exact());
        let point = sensitivity_on_resonance(&fit, &cfg.osc, &cfg.meas, &SensitivityOptions::default()).unwrap();
        assert!(rel(point.cooperativity.value, 1.9) < 1e-6);
        assert!(rel(point.s_ff_over_sql.value, point.theory_over_sql) < 1e-6);
        let s_ff = force_sensitivity(&cfg.osc, &cfg.meas, cfg.osc.omega_m).unwrap();
        assert!(rel(point.s_ff_abs.value, s_ff) < 1e-6);
        assert!(point.deviation.value.abs() < 1e-6 * point.theory_over_sql);
    }

    #[test]
    fn ideal_measurement_reaches_the_sql() {
        let meas = MeasurementConfig::new(1.0, false, 0.5, 2.5e-22, 1e-3).unwrap();
        let mut cfg = config(meas, AnharmonicLadder::single(), false, 1, 0);
        cfg.osc.nu = 0.0;
        let (fit, _) = fit(&cfg, &exact());
        let point = sensitivity_on_resonance(&fit, &cfg.osc, &cfg.meas, &SensitivityOptions::default()).unwrap();
        assert!(rel(point.s_ff_over_sql.value, 1.0) < 1e-6);
    }

    #[test]
    fn noiseless_spectrum_reproduces_closed_form() {
        let cfg = config(MeasurementConfig::reference(0.4), AnharmonicLadder::single(), false, 1, 0);
        let (fit, psd) = fit(&cfg, &exact());
        let spectrum = sensitivity_spectrum(&psd, &fit, false).unwrap();
        for (w, s) in spectrum.freqs.iter().zip(&spectrum.values) {
            let expected = force_sensitivity(&cfg.osc, &cfg.meas, *w).unwrap();
            assert!(rel(*s, expected) < 1e-9, "ω = {w}");
        }
    }

    #[test]
    fn secondary_subtraction_recovers_ground_level() {
        let cfg = config(MeasurementConfig::reference(10.0), AnharmonicLadder::reference(), false, 1, 0);
        let (fit, psd) = fit(&cfg, &exact());
        let spectrum = sensitivity_spectrum(&psd, &fit, true).unwrap();
        for (w, s) in spectrum.freqs.iter().zip(&spectrum.values) {
            let expected = force_sensitivity(&cfg.osc, &cfg.meas, *w).unwrap();
            assert!(rel(*s, expected) < 1e-6, "ω = {w}");
        }
        let raw = sensitivity_spectrum(&psd, &fit, false).unwrap();
        let red = raw.freqs.iter().position(|w| *w < cfg.osc.omega_m - 2.0 * cfg.osc.gamma).unwrap();
        assert!(raw.values[red] > spectrum.values[red]);
    }

    #[test]
    fn wings_rise_quadratically() {
        let cfg = config(MeasurementConfig::reference(1.9), AnharmonicLadder::single(), false, 1, 0);
        let (fit, psd) = fit(&cfg, &exact());
        let s = sensitivity_spectrum(&psd, &fit, false).unwrap().values;
        // constant second differences on a uniform grid
        let second: Vec<f64> = s.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect();
        assert!(second[0] > 0.0);
        for d in &second {
            assert!(rel(*d, second[0]) < 1e-6);
        }
        let n = s.len();
        assert!(s[n - 1] > s[3 * n / 4] && s[0] > s[n / 4]);
    }

    #[test]
    fn isotropic_cloud_has_unit_spread() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 4000;
        let points: Vec<[f64; 2]> = (0..n)
            .map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let e = covariance_ellipse(&points, 0.5).unwrap();
        let tol = 3.0 / (n as f64).sqrt();
        assert!((e.rms[0] - 1.0).abs() < tol && (e.rms[1] - 1.0).abs() < tol);
        let q = (2.0 * 2f64.ln()).sqrt();
        assert!((e.radii[0] / e.rms[0] - q).abs() < 1e-12);
    }

    #[test]
    fn rotation_leaves_radii_unchanged() {
        let points: Vec<[f64; 2]> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.37;
                [3.0 * t.sin() + 0.1 * i as f64 % 1.3, t.cos()]
            })
            .collect();
        let base = covariance_ellipse(&points, 0.5).unwrap();
        let (s, c) = 0.7f64.sin_cos();
        let rotated: Vec<[f64; 2]> = points.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
        let turned = covariance_ellipse(&rotated, 0.5).unwrap();
        for k in 0..2 {
            assert!(rel(turned.radii[k], base.radii[k]) < 1e-10);
        }
        let mut d = turned.orientation - base.orientation - 0.7;
        d = (d + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI) - std::f64::consts::FRAC_PI_2;
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn degenerate_ensembles_are_flagged() {
        let line: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(covariance_ellipse(&line, 0.5), Err(Error::DegenerateEnsemble(_))));
        assert!(matches!(covariance_ellipse(&line[..2], 0.5), Err(Error::DegenerateEnsemble(_))));
    }

    #[test]
    fn noiseless_displacement_sits_on_rotated_axis() {
        let mut cfg = config(MeasurementConfig::reference(1.9), AnharmonicLadder::single(), false, 1, 0);
        cfg.drive.phase = 0.8;
        let (fit, _) = fit(&cfg, &exact());
        let scan = drive_scan(&cfg, &[0.0]).unwrap();
        let ens = phase_space_points(&scan[0].reps, &fit, &cfg.meas, cfg.drive.phase, 0.5).unwrap();
        assert_eq!(ens.points.len(), 1);
        assert!(ens.ellipse.is_none());
        let expected = susceptibility(&cfg.osc, cfg.osc.omega_m).norm() * cfg.drive.f0 / cfg.osc.z_ho();
        let [z1, z2] = ens.points[0];
        assert!(z1.abs() < 1e-9 * expected);
        assert!(rel(-z2, expected) < 1e-6);
    }

    #[test]
    fn undriven_cloud_is_centred() {
        let cfg = config(MeasurementConfig::reference(1.9), AnharmonicLadder::single(), true, 200, 11);
        let (fit, _) = fit(&cfg, &FitOptions::default());
        let mut quiet = cfg.clone();
        quiet.drive = quiet.drive.with_mod_index(cfg.osc.n_atoms, 0.0).unwrap();
        let scan = drive_scan(&quiet, &[0.0]).unwrap();
        let ens = phase_space_points(&scan[0].reps, &fit, &cfg.meas, 0.0, 0.5).unwrap();
        let e = ens.ellipse.unwrap();
        let se = e.rms[0] / (ens.points.len() as f64).sqrt();
        assert!(ens.mean[0].abs() < 4.0 * se && ens.mean[1].abs() < 4.0 * se);
    }

    #[test]
    fn displacement_is_linear_in_drive() {
        let cfg = config(MeasurementConfig::reference(1.9), AnharmonicLadder::single(), false, 1, 0);
        let (fit, _) = fit(&cfg, &exact());
        let mut means = Vec::new();
        for index in [1e-3, 2e-3, 4e-3] {
            let mut c = cfg.clone();
            c.drive = c.drive.with_mod_index(cfg.osc.n_atoms, index).unwrap();
            let scan = drive_scan(&c, &[0.0]).unwrap();
            means.push(phase_space_points(&scan[0].reps, &fit, &c.meas, 0.0, 0.5).unwrap().mean[1]);
        }
        assert!(rel(means[1], 2.0 * means[0]) < 1e-9);
        assert!(rel(means[2], 4.0 * means[0]) < 1e-9);
    }

    #[test]
    fn product_matches_imprecision_chain() {
        let c_opt = crate::model::optimal_cooperativity(MeasurementConfig::reference(1.0).epsilon_eff());
        let cfg = config(MeasurementConfig::reference(c_opt), AnharmonicLadder::single(), true, 400, 5);
        let (fit, _) = fit(&cfg, &FitOptions::default());
        let scan = drive_scan(&cfg, &[0.0]).unwrap();
        let ens = phase_space_points(&scan[0].reps, &fit, &cfg.meas, cfg.drive.phase, 0.5).unwrap();
        let product = ens.ellipse.unwrap().product;
        let expected = expected_phase_product(&cfg.osc, &cfg.meas).unwrap();
        assert!((product.value - expected).abs() < 3.0 * product.sigma, "{product} vs {expected}");
        let bound = crate::model::uncertainty_bound(cfg.osc.nu, cfg.meas.epsilon_eff(), cfg.meas.tau, cfg.osc.gamma).unwrap();
        assert!(rel(expected, bound) < 1e-3, "{expected} vs {bound}");
    }
}
