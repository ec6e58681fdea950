//! Experiment orchestration: closed-form curves, cooperativity sweeps,
//! phase-space ensembles, force-noise spectra and the invariant suite.

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use yoctoforce::analysis::{
    covariance_ellipse, expected_phase_product, phase_space_points, sensitivity_on_resonance,
    sensitivity_spectrum, sql_ratio_forms, PhaseSpaceEnsemble,
    SensitivityOptions, SensitivityPoint, SensitivitySpectrum,
};
use yoctoforce::estimator::{
    fit_joint, initial_guess, FitOptions, JointFitResult, JointProblem, ParamIndex, PeakLayout,
    Scaling, Weighting,
};
use yoctoforce::model::{
    cooperativity_from_peak, force_sensitivity, heterodyne_psd_pm, sensitivity_terms,
    transduction, uncertainty_bound,
};
use yoctoforce::synth::{drive_scan, synth_coherent, synth_noise_psd, SynthConfig};
use yoctoforce::{ComplexSpectrum, MechanicalOscillator, PowerSpectrum};

use crate::config::{point_seed, RunConfig};

const BATCH_SWEEP: u64 = 1;
const BATCH_PHASE: u64 = 2;
const BATCH_SPECTRA: u64 = 3;

/// One synthesized and fitted measurement.
#[derive(Debug, Clone)]
pub struct PointRun {
    pub synth: SynthConfig,
    /// Averaged driven response divided by F₀, W/N.
    pub coherent: ComplexSpectrum,
    pub psd: PowerSpectrum,
    pub fit: JointFitResult,
}

pub fn layout_for(synth: &SynthConfig) -> PeakLayout {
    PeakLayout::ladder(synth.ladder.n_peaks, synth.ladder.splitting)
}

fn fit_synth(synth: SynthConfig, opts: &FitOptions) -> anyhow::Result<PointRun> {
    let reps = synth_coherent(&synth)?;
    let average = ComplexSpectrum::average(&reps)?;
    // an undriven run still fits ω_m and Γ from the noise PSD
    let coherent = if synth.drive.f0 > 0.0 {
        average.scaled(1.0 / synth.drive.f0)
    } else {
        average
    };
    let psd = synth_noise_psd(&synth)?;
    let layout = layout_for(&synth);
    let init = initial_guess(&coherent, &psd, &layout).context("initial guess")?;
    let fit = fit_joint(&coherent, &psd, &init, opts).context("joint fit")?;
    Ok(PointRun {
        synth,
        coherent,
        psd,
        fit,
    })
}

pub fn run_point(cfg: &RunConfig, cooperativity: f64, seed: u64) -> anyhow::Result<PointRun> {
    fit_synth(cfg.synth_config(cooperativity, seed)?, &FitOptions::default())
}

fn sensitivity_options(cfg: &RunConfig) -> SensitivityOptions {
    SensitivityOptions {
        atom_number_rel: cfg.synthesis.atom_number_rel,
        pin_shot_noise: false,
    }
}

// ---------------------------------------------------------------- theory

#[derive(Debug, Clone, Serialize)]
pub struct TheoryRow {
    pub cooperativity: f64,
    /// Terms of the corrected curve in zero-point-motion units.
    pub shot: f64,
    pub zero_point: f64,
    pub back_action: f64,
    pub total: f64,
    /// Ideal curve: unit efficiency, ground state.
    pub ideal_total: f64,
    pub total_over_sql: f64,
}

/// On-resonance sensitivity curves over `points` log-spaced
/// cooperativities in [c_min, c_max].
pub fn theory_table(
    cfg: &RunConfig,
    c_min: f64,
    c_max: f64,
    points: usize,
) -> anyhow::Result<Vec<TheoryRow>> {
    let osc = cfg.oscillator()?;
    let eps = cfg.measurement(1.0)?.epsilon_eff();
    let ideal = MechanicalOscillator { nu: 0.0, ..osc };
    let (lo, hi) = (c_min.ln(), c_max.ln());
    (0..points)
        .map(|i| {
            let t = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
            let c = (lo + (hi - lo) * t).exp();
            let terms = sensitivity_terms(&osc, eps, c, osc.omega_m)?;
            let ideal_terms = sensitivity_terms(&ideal, 1.0, c, ideal.omega_m)?;
            Ok(TheoryRow {
                cooperativity: c,
                shot: terms.shot,
                zero_point: terms.zero_point,
                back_action: terms.back_action,
                total: terms.total(),
                ideal_total: ideal_terms.total(),
                total_over_sql: terms.total() / 2.0,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub cooperativity_set: f64,
    pub seed: u64,
    pub point: Option<SensitivityPoint>,
    #[serde(skip)]
    pub fit: Option<JointFitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Row with the lowest measured S_FF/SQL.
    pub fn minimum(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.point.is_some())
            .min_by(|a, b| {
                let (pa, pb) = (a.point.unwrap(), b.point.unwrap());
                pa.s_ff_over_sql.value.total_cmp(&pb.s_ff_over_sql.value)
            })
    }
}

pub fn run_sweep(cfg: &RunConfig, seed: u64) -> SweepResult {
    let values = cfg.sweep_values();
    let opts = sensitivity_options(cfg);
    let rows = values
        .par_iter()
        .enumerate()
        .map(|(index, &c)| {
            let seed = point_seed(seed, BATCH_SWEEP, index);
            let outcome = run_point(cfg, c, seed).and_then(|run| {
                if run.synth.drive.f0 <= 0.0 {
                    anyhow::bail!("sensitivity needs a nonzero drive (drive.mod_index)");
                }
                let point = sensitivity_on_resonance(&run.fit, &run.synth.osc, &run.synth.meas, &opts)
                    .with_context(|| format!("fit status {:?}", run.fit.status))?;
                Ok((point, run.fit))
            });
            match outcome {
                Ok((point, fit)) => {
                    log::info!("sweep C = {c:.3}: S/SQL = {}", point.s_ff_over_sql);
                    SweepRow {
                        index,
                        cooperativity_set: c,
                        seed,
                        point: Some(point),
                        fit: Some(fit),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("sweep C = {c:.3} failed: {e:#}");
                    SweepRow {
                        index,
                        cooperativity_set: c,
                        seed,
                        point: None,
                        fit: None,
                        error: Some(format!("{e:#}")),
                    }
                }
            }
        })
        .collect();
    SweepResult { rows }
}

// ---------------------------------------------------------------- phase space

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRow {
    pub cooperativity_set: f64,
    pub seed: u64,
    pub ensemble: PhaseSpaceEnsemble,
    /// |χ(ω_m)|² S_FF(ω_m)/(τ z_HO²) at the set cooperativity.
    pub expected_product: f64,
    pub bound: f64,
}

pub fn run_phase(cfg: &RunConfig, seed: u64) -> anyhow::Result<Vec<PhaseRow>> {
    let osc = cfg.oscillator()?;
    let eps = cfg.measurement(1.0)?.epsilon_eff();
    let bound = uncertainty_bound(osc.nu, eps, cfg.measurement.tau, osc.gamma)?;
    cfg.phase
        .cooperativities
        .par_iter()
        .enumerate()
        .map(|(index, &c)| {
            let seed = point_seed(seed, BATCH_PHASE, index);
            let run = run_point(cfg, c, seed).with_context(|| format!("phase run at C = {c}"))?;
            let scan = drive_scan(&run.synth, &[0.0])?;
            let ensemble = phase_space_points(
                &scan[0].reps,
                &run.fit,
                &run.synth.meas,
                run.synth.drive.phase,
                cfg.phase.confidence,
            )?;
            Ok(PhaseRow {
                cooperativity_set: c,
                seed,
                ensemble,
                expected_product: expected_phase_product(&run.synth.osc, &run.synth.meas)?,
                bound,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- spectra

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub cooperativity_set: f64,
    pub seed: u64,
    pub spectrum: SensitivitySpectrum,
    /// Closed-form S_FF at the set cooperativity, N²/Hz.
    pub theory: Vec<f64>,
    pub omega_m: f64,
    pub gamma: f64,
}

/// Force-noise spectra with the secondary trap levels subtracted.
pub fn run_spectra(cfg: &RunConfig, seed: u64) -> anyhow::Result<Vec<SpectrumRow>> {
    cfg.phase
        .spectra
        .par_iter()
        .enumerate()
        .map(|(index, &c)| {
            let seed = point_seed(seed, BATCH_SPECTRA, index);
            let run = run_point(cfg, c, seed).with_context(|| format!("spectrum run at C = {c}"))?;
            let spectrum = sensitivity_spectrum(&run.psd, &run.fit, true)?;
            let theory = spectrum
                .freqs
                .iter()
                .map(|w| force_sensitivity(&run.synth.osc, &run.synth.meas, *w))
                .collect::<Result<_, _>>()?;
            Ok(SpectrumRow {
                cooperativity_set: c,
                seed,
                spectrum,
                theory,
                omega_m: run.fit.model.omega_m,
                gamma: run.fit.model.gamma,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- validation

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, result: anyhow::Result<(bool, String)>) -> Self {
        match result {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e:#}")),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
}

fn noiseless_fit(cfg: &RunConfig, c: f64) -> anyhow::Result<PointRun> {
    let mut synth = cfg.synth_config(c, 0)?;
    synth.noise = false;
    synth.n_reps = 1;
    let opts = FitOptions {
        weighting: Weighting::Uniform,
        scale_covariance: false,
        ..FitOptions::default()
    };
    fit_synth(synth, &opts)
}

fn check_noiseless_roundtrip(cfg: &RunConfig) -> anyhow::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for c in [0.4, 2.1, 10.0] {
        let run = noiseless_fit(cfg, c)?;
        let s = &run.synth;
        let m = &run.fit.model;
        let weights = s.ladder.relative_weights();
        let a0 = s.peak_transduction();
        worst = worst
            .max(rel(m.omega_m, s.osc.omega_m))
            .max(rel(m.gamma, s.osc.gamma))
            .max(rel(m.floor, s.meas.s_sn / 2.0));
        for (k, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                worst = worst.max(rel(m.a_sig(k), a0 * w));
            }
        }
        let point = sensitivity_on_resonance(&run.fit, &s.osc, &s.meas, &SensitivityOptions::default())?;
        worst = worst
            .max(rel(point.cooperativity.value, c))
            .max(rel(point.s_ff_abs.value, force_sensitivity(&s.osc, &s.meas, s.osc.omega_m)?));
    }
    Ok((worst < 1e-6, format!("max relative error {worst:.2e} (tolerance 1e-6)")))
}

fn check_peak_inversion(cfg: &RunConfig) -> anyhow::Result<(bool, String)> {
    let osc = cfg.oscillator()?;
    let mut worst: f64 = 0.0;
    for c in log_grid(0.01, 100.0, 201) {
        let meas = cfg.measurement(c)?;
        let ratio = heterodyne_psd_pm(&osc, &meas, osc.omega_m) / meas.s_sn;
        let back = cooperativity_from_peak(ratio, osc.nu, meas.epsilon_eff())?;
        worst = worst.max(rel(back, c));
    }
    Ok((worst < 1e-9, format!("max relative error {worst:.2e} over C in [0.01, 100] (tolerance 1e-9)")))
}

fn check_spectral_identity(cfg: &RunConfig) -> anyhow::Result<(bool, String)> {
    let osc = cfg.oscillator()?;
    let mut worst: f64 = 0.0;
    for c in log_grid(0.01, 100.0, 41) {
        let meas = cfg.measurement(c)?;
        for i in -100..=100 {
            let w = osc.omega_m + 0.1 * i as f64 * osc.gamma;
            let via = heterodyne_psd_pm(&osc, &meas, w) / transduction(&osc, &meas, w).powi(2);
            worst = worst.max(rel(via, force_sensitivity(&osc, &meas, w)?));
        }
    }
    // the fitted chain on noiseless single-level input
    let single = {
        let mut c = cfg.clone();
        c.ladder.level_fractions = vec![1.0];
        c.ladder.coupling_scale = vec![1.0];
        noiseless_fit(&c, 1.9)?
    };
    let spectrum = sensitivity_spectrum(&single.psd, &single.fit, false)?;
    let mut chain: f64 = 0.0;
    for (w, s) in spectrum.freqs.iter().zip(&spectrum.values) {
        chain = chain.max(rel(*s, force_sensitivity(&single.synth.osc, &single.synth.meas, *w)?));
    }
    Ok((
        worst < 1e-10 && chain < 1e-9,
        format!("closed forms {worst:.2e} (tolerance 1e-10), fitted chain {chain:.2e} (tolerance 1e-9)"),
    ))
}

fn check_ratio_forms(cfg: &RunConfig) -> anyhow::Result<(bool, String)> {
    let osc = cfg.oscillator()?;
    let mut worst: f64 = 0.0;
    for c in [0.2, 1.0, 2.1, 10.0, 50.0] {
        let run = noiseless_fit(cfg, c)?;
        let m = &run.fit.model;
        let (a, b) = sql_ratio_forms(m.noise_amplitude[0] + m.floor, m.a_sig(0), m.gamma, m.omega_m, &osc);
        worst = worst.max(rel(a, b));
    }
    Ok((worst < 1e-9, format!("max relative disagreement {worst:.2e} (tolerance 1e-9)")))
}

fn check_jacobian(cfg: &RunConfig, seed: u64) -> anyhow::Result<(bool, String)> {
    let run = run_point(cfg, 1.9, seed)?;
    let layout = run.fit.model.layout.clone();
    let index = ParamIndex::new(&layout);
    let scaling = Scaling {
        freq_ref: run.fit.model.omega_m,
        freq_scale: run.fit.model.gamma,
        coherent_scale: run.fit.model.a_sig(0),
        psd_scale: run.fit.model.floor,
    };
    let coh_sigma: Vec<f64> = run.coherent.freqs.iter().map(|_| 1e-2 * run.fit.model.a_sig(0)).collect();
    let psd_sigma: Vec<f64> = run.psd.values.iter().map(|v| v * 0.1).collect();
    let problem = JointProblem::new(&run.coherent, &coh_sigma, &run.psd, &psd_sigma, &layout, scaling);
    let mut worst: f64 = 0.0;
    let x = scaling.pack(&run.fit.model, &index);
    worst = worst.max(problem.jacobian_fd_error(&x));
    let mut shifted = x.clone();
    shifted[ParamIndex::OMEGA_M] += 0.3;
    shifted[ParamIndex::GAMMA] *= 1.2;
    worst = worst.max(problem.jacobian_fd_error(&shifted));
    Ok((worst < 1e-6, format!("max column-relative deviation {worst:.2e} (tolerance 1e-6)")))
}

fn check_determinism(cfg: &RunConfig, seed: u64) -> anyhow::Result<(bool, String)> {
    let snapshot = || -> anyhow::Result<String> {
        let run = run_point(cfg, 1.9, seed)?;
        let scan = drive_scan(&run.synth, &[0.0])?;
        Ok(serde_json::to_string(&(&run.fit, &run.psd, &scan[0].reps[0]))?)
    };
    let (a, b) = (snapshot()?, snapshot()?);
    let c = {
        let run = run_point(cfg, 1.9, seed.wrapping_add(1))?;
        serde_json::to_string(&run.psd)?
    };
    let differs = !a.contains(&c);
    Ok((a == b && differs, format!("{} bytes identical across reruns; other seed differs: {differs}", a.len())))
}

fn check_config_rejection() -> anyhow::Result<(bool, String)> {
    let gamma = RunConfig::from_toml("[oscillator]\ngamma_hz = 0.0\n");
    let eps = RunConfig::from_toml("[measurement]\nepsilon_det = 1.5\n");
    let gamma_ok = matches!(&gamma, Err(e) if format!("{e:#}").contains("gamma"));
    let eps_ok = matches!(&eps, Err(e) if format!("{e:#}").contains("epsilon_det"));
    Ok((gamma_ok && eps_ok, format!("Γ = 0 rejected: {gamma_ok}; ε = 1.5 rejected: {eps_ok}")))
}

fn check_ellipse() -> anyhow::Result<(bool, String)> {
    let points = [[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
    let e = covariance_ellipse(&points, 0.5)?;
    let var_major: f64 = 8.0 / 3.0;
    let var_minor: f64 = 2.0 / 3.0;
    let q = 2.0 * 2f64.ln();
    let err = rel(e.rms[0], var_major.sqrt())
        .max(rel(e.rms[1], var_minor.sqrt()))
        .max(rel(e.radii[0], (var_major * q).sqrt()))
        .max((e.orientation.abs() - std::f64::consts::FRAC_PI_2).abs());
    Ok((err < 1e-12, format!("max deviation {err:.2e} from the hand-computed ellipse")))
}

/// Runs the invariant suite.
pub fn run_validation(cfg: &RunConfig, seed: u64) -> Vec<Check> {
    vec![
        Check::from_result("noiseless fit roundtrip", check_noiseless_roundtrip(cfg)),
        Check::from_result("peak-ratio cooperativity inversion", check_peak_inversion(cfg)),
        Check::from_result("heterodyne spectrum / transduction = force noise", check_spectral_identity(cfg)),
        Check::from_result("SQL-ratio forms agree", check_ratio_forms(cfg)),
        Check::from_result("Jacobian vs finite differences", check_jacobian(cfg, seed)),
        Check::from_result("fixed-seed reruns are bit-exact", check_determinism(cfg, seed)),
        Check::from_result("invalid configuration rejected", check_config_rejection()),
        Check::from_result("covariance ellipse", check_ellipse()),
    ]
}
