//! Joint fitting of the driven complex response and the undriven noise PSD.
//!
//! Both spectra share the resonance frequency and linewidth of every peak.
//! The solver is a damped Gauss-Newton iteration on weighted residuals with
//! an analytic Jacobian; parameter uncertainties come from the inverse
//! normal matrix at the optimum.

mod guess;
mod lm;
mod model;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use guess::initial_guess;
pub use model::{JointFitModel, JointProblem, ParamIndex, PeakLayout, Scaling};

use crate::model::{cooperativity_from_peak, cooperativity_from_peak_slope};
use crate::model::{ComplexSpectrum, PowerSpectrum};
use crate::{Error, Estimate, Result};
use lm::{LmSettings, LmStop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// Coherent bins by their noise variance, PSD bins by expectation/√n_avg.
    Statistical,
    /// Unit weights in the solver's normalized units.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative step-size tolerance.
    pub xtol: f64,
    /// Tolerance on the cosine between residuals and Jacobian columns.
    pub gtol: f64,
    pub weighting: Weighting,
    /// Refits with PSD weights taken from the previous solution.
    pub reweight_passes: usize,
    /// Scale the covariance by the reduced chi-squared.
    pub scale_covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            xtol: 1e-10,
            gtol: 1e-8,
            weighting: Weighting::Statistical,
            reweight_passes: 1,
            scale_covariance: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFitResult {
    pub model: JointFitModel,
    pub param_names: Vec<String>,
    /// Row-major covariance of the parameters in SI units, ordered as
    /// `param_names`.
    pub covariance: Vec<f64>,
    /// Weighted residual norms of the coherent and PSD parts.
    pub residual_norm_coherent: f64,
    pub residual_norm_psd: f64,
    pub chi2: f64,
    pub dof: usize,
    pub status: FitStatus,
    pub iterations: usize,
}

impl JointFitResult {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }

    pub fn index(&self) -> ParamIndex {
        ParamIndex::new(&self.model.layout)
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.n_params() + j]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.cov(i, i).max(0.0).sqrt()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.n_params();
        DMatrix::from_row_slice(n, n, &self.covariance)
    }

    /// Variance of a scalar function with the given SI gradient.
    pub fn propagate(&self, gradient: &[f64]) -> f64 {
        let n = self.n_params();
        let mut var = 0.0;
        for i in 0..n {
            for j in 0..n {
                var += gradient[i] * self.cov(i, j) * gradient[j];
            }
        }
        var.max(0.0)
    }

    /// SI parameter vector ordered as `param_names`.
    pub fn parameters(&self) -> DVector<f64> {
        Scaling::IDENTITY.pack(&self.model, &self.index())
    }

    pub fn model_at(&self, x: &DVector<f64>) -> JointFitModel {
        Scaling::IDENTITY.unpack(x, &self.index(), &self.model.layout)
    }

    /// Variances of a vector-valued function of the fitted model by linear
    /// propagation, using central differences of a thousandth of a standard
    /// deviation per parameter.
    pub fn propagate_with<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&JointFitModel) -> Vec<f64>,
    {
        let x0 = self.parameters();
        let n = self.n_params();
        let m = f(&self.model).len();
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = 1e-3 * self.sigma(j);
            if !(h > 0.0) {
                continue;
            }
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (f(&self.model_at(&xp)), f(&self.model_at(&xm)));
            for i in 0..m {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let cov = &jac * self.covariance_matrix() * jac.transpose();
        (0..m).map(|i| cov[(i, i)].max(0.0)).collect()
    }

    pub fn omega_m(&self) -> Estimate {
        Estimate::new(self.model.omega_m, self.sigma(ParamIndex::OMEGA_M))
    }

    pub fn gamma(&self) -> Estimate {
        Estimate::new(self.model.gamma, self.sigma(ParamIndex::GAMMA))
    }

    /// Gradient of A_sig,k = |c_k| with respect to the parameters.
    pub fn a_sig_gradient(&self, k: usize) -> Vec<f64> {
        let idx = self.index();
        let c = self.model.coherent[k];
        let mut g = vec![0.0; self.n_params()];
        let a = c.norm();
        if a > 0.0 {
            g[idx.re(k)] = c.re / a;
            g[idx.im(k)] = c.im / a;
        }
        g
    }

    pub fn a_sig(&self, k: usize) -> Estimate {
        Estimate::new(self.model.a_sig(k), self.propagate(&self.a_sig_gradient(k)).sqrt())
    }

    pub fn noise_amplitude(&self, k: usize) -> Estimate {
        Estimate::new(self.model.noise_amplitude[k], self.sigma(self.index().noise(k)))
    }

    pub fn floor(&self) -> Estimate {
        match self.index().floor() {
            Some(i) => Estimate::new(self.model.floor, self.sigma(i)),
            None => Estimate::exact(self.model.floor),
        }
    }
}

fn check_coverage(freqs: &[f64], omega_m: f64, gamma: f64, what: &str) -> Result<()> {
    let lo = freqs[0];
    let hi = freqs[freqs.len() - 1];
    if lo > omega_m - 3.0 * gamma || hi < omega_m + 3.0 * gamma {
        return Err(Error::InvalidSpectrum(format!(
            "{what} grid must cover ±3Γ around ω_m"
        )));
    }
    Ok(())
}

/// Per-quadrature sigma of the coherent bins.
fn coherent_sigma(
    coh: &ComplexSpectrum,
    init: &JointFitModel,
    opts: &FitOptions,
    scale: f64,
) -> Vec<f64> {
    let n = coh.freqs.len();
    if opts.weighting == Weighting::Uniform {
        return vec![scale; n];
    }
    if let Some(var) = &coh.variance {
        if var.iter().all(|v| *v > 0.0) {
            return var.iter().map(|v| v.sqrt()).collect();
        }
    }
    // scatter about the starting model in bins away from the resonance
    let (mut ss, mut count) = (0.0, 0usize);
    for (w, v) in coh.freqs.iter().zip(&coh.values) {
        if (w - init.omega_m).abs() > 3.0 * init.gamma {
            ss += (v - init.coherent_at(*w)).norm_sqr();
            count += 1;
        }
    }
    let sigma = if count > 0 { (ss / (2.0 * count as f64)).sqrt() } else { 0.0 };
    vec![sigma.max(1e-12 * scale); n]
}

fn psd_sigma(psd: &PowerSpectrum, model: &JointFitModel, opts: &FitOptions, scale: f64) -> Vec<f64> {
    match opts.weighting {
        Weighting::Uniform => vec![scale; psd.freqs.len()],
        Weighting::Statistical => {
            let root_n = (psd.n_avg as f64).sqrt();
            psd.freqs
                .iter()
                .map(|w| (model.psd_at(*w) / root_n).max(1e-12 * scale))
                .collect()
        }
    }
}

/// Normal-matrix inverse, or the names of unidentifiable parameters.
fn invert_normal(jac: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let a = jac.transpose() * jac;
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let zero_cols: Vec<String> = (0..n)
        .filter(|&i| !(d[i] > 0.0))
        .map(|i| names[i].clone())
        .collect();
    if !zero_cols.is_empty() {
        return Err(Error::DegenerateFit(zero_cols));
    }
    let dinv = DVector::from_iterator(n, d.iter().map(|v| 1.0 / v.sqrt()));
    let corr = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * dinv[i] * dinv[j]);
    let eig = SymmetricEigen::new(corr.clone());
    let max_ev = eig.eigenvalues.max();
    let mut weak = Vec::new();
    for (k, ev) in eig.eigenvalues.iter().enumerate() {
        if *ev <= 1e-13 * max_ev {
            let v = eig.eigenvectors.column(k);
            for i in 0..n {
                if v[i].abs() > 0.3 && !weak.contains(&names[i]) {
                    weak.push(names[i].clone());
                }
            }
        }
    }
    if !weak.is_empty() {
        return Err(Error::DegenerateFit(weak));
    }
    let inv = corr
        .cholesky()
        .ok_or_else(|| Error::DegenerateFit(names.to_vec()))?
        .inverse();
    Ok(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * dinv[i] * dinv[j]))
}

/// Fits the joint model to a coherent response (W/N) and a noise PSD.
///
/// Non-convergence is reported through [`JointFitResult::status`] with the
/// last iterate; a singular normal matrix is an error naming the
/// unidentifiable parameters.
pub fn fit_joint(
    coh: &ComplexSpectrum,
    psd: &PowerSpectrum,
    init: &JointFitModel,
    opts: &FitOptions,
) -> Result<JointFitResult> {
    coh.validate()?;
    psd.validate()?;
    init.validate()?;
    check_coverage(&coh.freqs, init.omega_m, init.gamma, "coherent")?;
    check_coverage(&psd.freqs, init.omega_m, init.gamma, "PSD")?;

    let layout = init.layout.clone();
    let coherent_scale = coh
        .values
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let psd_scale = psd.values.iter().cloned().fold(0.0, f64::max);
    let scaling = Scaling {
        freq_ref: init.omega_m,
        freq_scale: init.gamma,
        coherent_scale: if coherent_scale > 0.0 { coherent_scale } else { 1.0 },
        psd_scale: if psd_scale > 0.0 { psd_scale } else { 1.0 },
    };
    let index = ParamIndex::new(&layout);
    let names = index.names();

    let coh_sigma = coherent_sigma(coh, init, opts, scaling.coherent_scale);
    let mut problem = JointProblem::new(
        coh,
        &coh_sigma,
        psd,
        &psd_sigma(psd, init, opts, scaling.psd_scale),
        &layout,
        scaling,
    );
    let settings = LmSettings {
        max_iter: opts.max_iter,
        xtol: opts.xtol,
        gtol: opts.gtol,
        initial_damping: 1e-3,
    };

    let mut x = scaling.pack(init, &index);
    let mut outcome = lm::minimize(&problem, x.clone(), &settings);
    let mut iterations = outcome.iterations;
    let passes = if opts.weighting == Weighting::Statistical {
        opts.reweight_passes
    } else {
        0
    };
    for _ in 0..passes {
        x = outcome.x.clone();
        let current = scaling.unpack(&x, &index, &layout);
        problem = problem.with_psd_sigma(&psd_sigma(psd, &current, opts, scaling.psd_scale));
        outcome = lm::minimize(&problem, x, &settings);
        iterations += outcome.iterations;
    }

    let x = outcome.x;
    let jac = problem.jacobian(&x);
    let r = problem.residuals(&x);
    let m = r.len();
    let p = x.len();
    let chi2 = r.norm_squared();
    let dof = m.saturating_sub(p);
    let mut cov_norm = invert_normal(&jac, &names)?;
    if opts.scale_covariance && dof > 0 {
        cov_norm *= chi2 / dof as f64;
    }
    let f = scaling.factors(&index);
    let cov = DMatrix::from_fn(p, p, |i, j| cov_norm[(i, j)] * f[i] * f[j]);
    // symmetrize away rounding
    let cov = (&cov + cov.transpose()) * 0.5;

    let nc = problem.n_coherent_residuals();
    Ok(JointFitResult {
        model: scaling.unpack(&x, &index, &layout),
        param_names: names,
        covariance: cov.transpose().iter().cloned().collect(),
        residual_norm_coherent: r.rows(0, nc).norm(),
        residual_norm_psd: r.rows(nc, m - nc).norm(),
        chi2,
        dof,
        status: match outcome.stop {
            LmStop::Converged => FitStatus::Converged,
            LmStop::MaxIterations => FitStatus::MaxIterations,
            LmStop::Stalled => FitStatus::Stalled,
        },
        iterations,
    })
}

/// Cooperativity from the fitted on-resonance noise peak,
/// `(A_NN + S_SN/2) / S_SN`. S_SN defaults to twice the fitted floor.
pub fn estimate_cooperativity(
    fit: &JointFitResult,
    nu: f64,
    epsilon_eff: f64,
    s_sn: Option<f64>,
) -> Result<Estimate> {
    if !fit.converged() {
        return Err(Error::NotConverged);
    }
    let idx = fit.index();
    let a = fit.model.noise_amplitude[0];
    let mut grad = vec![0.0; fit.n_params()];
    let ratio = match s_sn {
        Some(s) => {
            grad[idx.noise(0)] = 1.0 / s;
            (a + s / 2.0) / s
        }
        None => {
            let f = fit.model.floor;
            if !(f > 0.0) {
                return Err(Error::invalid("floor", "fitted shot-noise floor is zero"));
            }
            grad[idx.noise(0)] = 1.0 / (2.0 * f);
            if let Some(i) = idx.floor() {
                grad[i] = -a / (2.0 * f * f);
            }
            (a + f) / (2.0 * f)
        }
    };
    let c = cooperativity_from_peak(ratio, nu, epsilon_eff)?;
    let slope = cooperativity_from_peak_slope(ratio, nu, epsilon_eff);
    let sigma = slope * fit.propagate(&grad).sqrt();
    Ok(Estimate::new(c, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriveConfig, MeasurementConfig, MechanicalOscillator};
    use crate::synth::{synth_coherent, synth_noise_psd, AnharmonicLadder, SynthConfig};
    use num_complex::Complex64;

    fn synth(c: f64, ladder: AnharmonicLadder, noise: bool, seed: u64) -> (SynthConfig, ComplexSpectrum, PowerSpectrum) {
        let osc = MechanicalOscillator::reference();
        let mut cfg = SynthConfig::new(
            osc,
            MeasurementConfig::reference(c),
            DriveConfig::reference(osc.n_atoms, osc.omega_m),
            ladder,
            if noise { 150 } else { 1 },
            seed,
        )
        .unwrap();
        cfg.noise = noise;
        cfg.psd_records = 10;
        let reps = synth_coherent(&cfg).unwrap();
        let coh = ComplexSpectrum::average(&reps).unwrap().scaled(1.0 / cfg.drive.f0);
        let psd = synth_noise_psd(&cfg).unwrap();
        (cfg, coh, psd)
    }

    fn layout_for(cfg: &SynthConfig) -> PeakLayout {
        PeakLayout::ladder(cfg.ladder.n_peaks, cfg.ladder.splitting)
    }

    fn uniform() -> FitOptions {
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
    fn noiseless_ladder_roundtrip() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::reference(), false, 0);
        let layout = layout_for(&cfg);
        let init = initial_guess(&coh, &psd, &layout).unwrap();
        let fit = fit_joint(&coh, &psd, &init, &uniform()).unwrap();
        assert!(fit.converged(), "{:?}", fit.status);
        assert!(rel(fit.model.omega_m, cfg.osc.omega_m) < 1e-6);
        assert!(rel(fit.model.gamma, cfg.osc.gamma) < 1e-6);
        let weights = cfg.ladder.relative_weights();
        let a0 = cfg.peak_transduction();
        for (k, w) in weights.iter().enumerate().take(cfg.ladder.n_peaks) {
            assert!(rel(fit.model.a_sig(k), a0 * w) < 1e-6, "peak {k}");
        }
        assert!(rel(fit.model.floor, cfg.meas.s_sn / 2.0) < 1e-6);
        let peak = cfg.expected_psd(cfg.osc.omega_m) - cfg.meas.s_sn / 2.0;
        assert!(rel(fit.model.psd_at(cfg.osc.omega_m) - fit.model.floor, peak) < 1e-6);
    }

    #[test]
    fn resonance_phase_is_minus_quarter_turn() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let init = initial_guess(&coh, &psd, &layout_for(&cfg)).unwrap();
        let fit = fit_joint(&coh, &psd, &init, &uniform()).unwrap();
        let angle = fit.model.response_angle(fit.model.omega_m);
        assert!((angle + std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        let total = fit.model.coherent_at(fit.model.omega_m).arg() - cfg.drive.phase;
        assert!((total + std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn cooperativity_is_scale_invariant() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let layout = layout_for(&cfg);
        let eps = cfg.meas.epsilon_eff();
        let mut values = Vec::new();
        for scale in [1.0, 1e3, 1e-4] {
            let p = psd.scaled(scale);
            let c = coh.scaled(scale.sqrt());
            let init = initial_guess(&c, &p, &layout).unwrap();
            let fit = fit_joint(&c, &p, &init, &uniform()).unwrap();
            values.push(estimate_cooperativity(&fit, cfg.osc.nu, eps, None).unwrap().value);
        }
        assert!(rel(values[0], 1.9) < 1e-6);
        for v in &values[1..] {
            assert!(rel(*v, values[0]) < 1e-9);
        }
    }

    #[test]
    fn translation_shifts_only_the_centre() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let layout = layout_for(&cfg);
        let base = {
            let init = initial_guess(&coh, &psd, &layout).unwrap();
            fit_joint(&coh, &psd, &init, &uniform()).unwrap()
        };
        let delta = 2.0 * std::f64::consts::PI * 1234.5;
        let (c2, p2) = (coh.shifted(delta), psd.shifted(delta));
        let init = initial_guess(&c2, &p2, &layout).unwrap();
        let moved = fit_joint(&c2, &p2, &init, &uniform()).unwrap();
        assert!(((moved.model.omega_m - base.model.omega_m) - delta).abs() < 1e-6 * cfg.osc.gamma);
        assert!(rel(moved.model.gamma, base.model.gamma) < 1e-8);
        assert!(rel(moved.model.a_sig(0), base.model.a_sig(0)) < 1e-8);
        assert!(rel(moved.model.noise_amplitude[0], base.model.noise_amplitude[0]) < 1e-8);
    }

    #[test]
    fn zero_coherent_signal_gives_zero_amplitude() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let zero = coh.scaled(0.0);
        let init = initial_guess(&zero, &psd, &layout_for(&cfg)).unwrap();
        let fit = fit_joint(&zero, &psd, &init, &uniform()).unwrap();
        assert!(fit.model.a_sig(0) < 1e-12 * cfg.peak_transduction());
        assert!(rel(fit.model.gamma, cfg.osc.gamma) < 1e-6);
    }

    #[test]
    fn flat_spectra_have_no_resonance() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let flat = PowerSpectrum::new(psd.freqs.clone(), vec![cfg.meas.s_sn / 2.0; psd.freqs.len()], 1500).unwrap();
        let err = initial_guess(&coh.scaled(0.0), &flat, &layout_for(&cfg)).unwrap_err();
        assert!(matches!(err, Error::NoResonance { .. }));
    }

    #[test]
    fn coherent_peak_locates_a_weak_noise_resonance() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let flat = PowerSpectrum::new(psd.freqs.clone(), vec![cfg.meas.s_sn / 2.0; psd.freqs.len()], 1500).unwrap();
        let init = initial_guess(&coh, &flat, &layout_for(&cfg)).unwrap();
        assert!(rel(init.omega_m, cfg.osc.omega_m) < 1e-6);
        assert!(rel(init.gamma, cfg.osc.gamma) < 1e-6);
        assert!(init.noise_amplitude[0] < 1e-9 * cfg.meas.s_sn);
    }

    #[test]
    fn identical_peaks_are_degenerate() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let layout = PeakLayout::ladder(2, 0.0);
        let mut init = initial_guess(&coh, &psd, &PeakLayout::single()).unwrap();
        init.layout = layout;
        init.coherent.push(Complex64::new(0.0, 0.0));
        init.noise_amplitude.push(0.0);
        init.offsets.push(0.0);
        let err = fit_joint(&coh, &psd, &init, &uniform()).unwrap_err();
        match err {
            Error::DegenerateFit(names) => {
                assert!(names.iter().any(|n| n.contains("[1]")), "{names:?}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let _ = cfg;
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::single(), false, 0);
        let init = initial_guess(&coh, &psd, &layout_for(&cfg)).unwrap();
        let keep = |w: &f64| (w - cfg.osc.omega_m).abs() < 2.0 * cfg.osc.gamma;
        let idx: Vec<usize> = (0..psd.freqs.len()).filter(|&i| keep(&psd.freqs[i])).collect();
        let cut = PowerSpectrum::new(
            idx.iter().map(|&i| psd.freqs[i]).collect(),
            idx.iter().map(|&i| psd.values[i]).collect(),
            psd.n_avg,
        )
        .unwrap();
        assert!(matches!(
            fit_joint(&coh, &cut, &init, &uniform()),
            Err(Error::InvalidSpectrum(_))
        ));
    }

    #[test]
    fn converges_from_perturbed_start() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::reference(), false, 0);
        let layout = layout_for(&cfg);
        let truth = {
            let init = initial_guess(&coh, &psd, &layout).unwrap();
            fit_joint(&coh, &psd, &init, &uniform()).unwrap().model
        };
        for (dw, dg, da) in [(0.1, 1.1, 1.1), (-0.1, 0.9, 0.9), (0.05, 0.9, 1.1)] {
            let mut init = truth.clone();
            init.omega_m += dw * truth.gamma;
            init.gamma *= dg;
            init.coherent.iter_mut().for_each(|c| *c *= da);
            init.noise_amplitude.iter_mut().for_each(|a| *a *= da);
            init.floor *= 2.0 - da;
            let fit = fit_joint(&coh, &psd, &init, &uniform()).unwrap();
            assert!(fit.converged());
            assert!(rel(fit.model.omega_m, truth.omega_m) < 1e-9);
            assert!(rel(fit.model.gamma, truth.gamma) < 1e-6);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::reference(), true, 3);
        let mut layout = layout_for(&cfg);
        layout.free_spacing = true;
        let init = initial_guess(&coh, &psd, &layout).unwrap();
        let fit = fit_joint(&coh, &psd, &init, &FitOptions::default()).unwrap();
        let index = ParamIndex::new(&layout);
        let scaling = Scaling {
            freq_ref: init.omega_m,
            freq_scale: init.gamma,
            coherent_scale: 1e-6,
            psd_scale: 1e-22,
        };
        let sig_c = vec![1e-7; coh.freqs.len()];
        let sig_p: Vec<f64> = psd.values.iter().map(|v| v / 10.0).collect();
        let problem = JointProblem::new(&coh, &sig_c, &psd, &sig_p, &layout, scaling);
        let x = scaling.pack(&fit.model, &index);
        assert!(problem.jacobian_fd_error(&x) < 1e-6);
    }

    #[test]
    fn noisy_fit_uncertainties_are_calibrated() {
        let mut pulls_gamma = Vec::new();
        let mut pulls_c = Vec::new();
        for seed in 0..40 {
            let (cfg, coh, psd) = synth(1.9, AnharmonicLadder::reference(), true, seed);
            let layout = layout_for(&cfg);
            let init = initial_guess(&coh, &psd, &layout).unwrap();
            let fit = fit_joint(&coh, &psd, &init, &FitOptions::default()).unwrap();
            assert!(fit.converged(), "seed {seed}: {:?}", fit.status);
            let g = fit.gamma();
            pulls_gamma.push((g.value - cfg.osc.gamma) / g.sigma);
            let c = estimate_cooperativity(&fit, cfg.osc.nu, cfg.meas.epsilon_eff(), None).unwrap();
            pulls_c.push((c.value - 1.9) / c.sigma);
        }
        for pulls in [&pulls_gamma, &pulls_c] {
            let n = pulls.len() as f64;
            let mean = pulls.iter().sum::<f64>() / n;
            let sd = (pulls.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(mean.abs() < 0.6, "mean pull {mean}");
            assert!((0.6..1.5).contains(&sd), "pull spread {sd}");
        }
    }
}
