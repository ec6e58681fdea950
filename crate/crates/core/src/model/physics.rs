use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::constants::G_EARTH;
use super::measurement::MeasurementConfig;
use super::oscillator::MechanicalOscillator;
use crate::{Error, Result};

/// Mechanical susceptibility χ(ω) = {2mω_m[−(ω−ω_m) − iΓ/2]}⁻¹, m/N.
pub fn susceptibility(osc: &MechanicalOscillator, omega: f64) -> Complex64 {
    let denom = Complex64::new(-(omega - osc.omega_m), -osc.gamma / 2.0)
        * (2.0 * osc.mass() * osc.omega_m);
    denom.inv()
}

/// Lorentzian detuning factor ((ω−ω_m)² + (Γ/2)²) / (Γ/2)².
fn detuning_factor(osc: &MechanicalOscillator, omega: f64) -> f64 {
    let h = osc.gamma / 2.0;
    ((omega - osc.omega_m).powi(2) + h * h) / (h * h)
}

/// The three contributions to the force imprecision, in units of the
/// zero-point motion noise 2Γp_HO².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTerms {
    pub shot: f64,
    pub zero_point: f64,
    pub back_action: f64,
}

impl SensitivityTerms {
    pub fn total(&self) -> f64 {
        self.shot + self.zero_point + self.back_action
    }
}

pub fn sensitivity_terms(
    osc: &MechanicalOscillator,
    epsilon_eff: f64,
    cooperativity: f64,
    omega: f64,
) -> Result<SensitivityTerms> {
    if !(cooperativity > 0.0) {
        return Err(Error::ZeroCooperativity);
    }
    Ok(SensitivityTerms {
        shot: detuning_factor(osc, omega) / (4.0 * epsilon_eff * cooperativity),
        zero_point: 2.0 * osc.nu + 1.0,
        back_action: cooperativity,
    })
}

/// Total force imprecision S_FF(ω), N²/Hz.
pub fn force_sensitivity(
    osc: &MechanicalOscillator,
    meas: &MeasurementConfig,
    omega: f64,
) -> Result<f64> {
    let terms = sensitivity_terms(osc, meas.epsilon_eff(), meas.cooperativity, omega)?;
    Ok(osc.zpm() * terms.total())
}

/// Absolute standard quantum limit 4Γp_HO², N²/Hz.
pub fn sql_sensitivity(osc: &MechanicalOscillator) -> f64 {
    4.0 * osc.gamma * osc.p_ho().powi(2)
}

/// Best on-resonance sensitivity 2Γp_HO²[1/√ε + (2ν+1)] for the
/// oscillator's thermal occupation.
pub fn min_sensitivity(osc: &MechanicalOscillator, epsilon_eff: f64) -> f64 {
    osc.zpm() * (1.0 / epsilon_eff.sqrt() + 2.0 * osc.nu + 1.0)
}

/// Cooperativity minimizing the on-resonance imprecision, 1/(2√ε).
pub fn optimal_cooperativity(epsilon_eff: f64) -> f64 {
    1.0 / (2.0 * epsilon_eff.sqrt())
}

/// Intracavity photon spectrum in the phase quadrature. The cavity filter
/// κ²/(κ²+ω²) is included whenever κ is known.
pub fn photon_spectrum_pm(osc: &MechanicalOscillator, meas: &MeasurementConfig, omega: f64) -> f64 {
    let c = meas.cooperativity;
    let filter = meas
        .kappa
        .map_or(1.0, |k| k * k / (k * k + omega * omega));
    let h = osc.gamma / 2.0;
    let lorentz = osc.gamma.powi(2) / ((omega - osc.omega_m).powi(2) + h * h);
    c / 2.0 * filter * lorentz * (2.0 * osc.nu + 1.0 + c)
}

/// Heterodyne PSD of the phase quadrature, in the units of S_SN.
///
/// Resolved-sideband form unless `meas.cavity_filter` is set, in which case
/// S_SN/2·[1 + 2ε n^PM(ω)] with the full cavity filter is used.
pub fn heterodyne_psd_pm(osc: &MechanicalOscillator, meas: &MeasurementConfig, omega: f64) -> f64 {
    let eps = meas.epsilon_eff();
    if meas.cavity_filter {
        return meas.s_sn / 2.0 * (1.0 + 2.0 * eps * photon_spectrum_pm(osc, meas, omega));
    }
    let c = meas.cooperativity;
    let chi2 = susceptibility(osc, omega).norm_sqr();
    let scale = (osc.mass() * osc.omega_m * osc.gamma).powi(2);
    meas.s_sn / 2.0 * (1.0 + 4.0 * eps * c * (2.0 * osc.nu + c + 1.0) * scale * chi2)
}

/// Force-to-optical-power transduction |T_sig(ω)|, W/N.
pub fn transduction(osc: &MechanicalOscillator, meas: &MeasurementConfig, omega: f64) -> f64 {
    let amp = (meas.epsilon_eff() * meas.s_sn * meas.cooperativity * osc.gamma).sqrt() / osc.z_ho();
    amp * susceptibility(osc, omega).norm()
}

/// Lower bound on the phase-space imprecision product ⟨ΔZ₁⟩⟨ΔZ₂⟩ after a
/// measurement of duration τ.
pub fn uncertainty_bound(nu: f64, epsilon_eff: f64, tau: f64, gamma: f64) -> Result<f64> {
    let tg = tau * gamma;
    if !(tg > 0.0) || !tg.is_finite() {
        return Err(Error::invalid("tau", "τΓ must be positive"));
    }
    Ok(2.0 / tg * ((2.0 * nu + 1.0) + 1.0 / epsilon_eff.sqrt()))
}

/// ⟨ΔZ₁⟩⟨ΔZ₂⟩ = |χ(ω_m)|² S_FF / (τ z_HO²) implied by a force imprecision.
pub fn position_imprecision_product(osc: &MechanicalOscillator, s_ff: f64, tau: f64) -> f64 {
    susceptibility(osc, osc.omega_m).norm_sqr() * s_ff / (tau * osc.z_ho().powi(2))
}

/// Acceleration noise amplitude sqrt(S_FF)/(m g), in g/√Hz.
pub fn acceleration_sensitivity(osc: &MechanicalOscillator, s_ff: f64) -> f64 {
    s_ff.sqrt() / (osc.mass() * G_EARTH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::constants::{angular, M_RB87};

    fn reference_osc_18() -> MechanicalOscillator {
        MechanicalOscillator::with_total_mass(1.8e-22, 1200, angular(110e3), angular(3e3), 1.2)
            .unwrap()
    }

    fn meas(eps_eff: f64, c: f64) -> MeasurementConfig {
        MeasurementConfig::new(eps_eff, false, c, 2.5e-22, 1e-3).unwrap()
    }

    #[test]
    fn susceptibility_peak_value_and_phase() {
        let osc = reference_osc_18();
        let chi = susceptibility(&osc, osc.omega_m);
        // independent evaluation of the closed form
        assert!((chi.norm() / 426_435_958_090.647_3 - 1.0).abs() < 1e-12);
        assert!((chi.arg().to_degrees() - 90.0).abs() < 1e-12);
        assert!((chi.norm() * osc.mass() * osc.omega_m * osc.gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn susceptibility_half_width_and_symmetry() {
        let osc = MechanicalOscillator::reference();
        let peak = susceptibility(&osc, osc.omega_m).norm();
        let half = susceptibility(&osc, osc.omega_m + osc.gamma / 2.0).norm();
        assert!((half * 2f64.sqrt() / peak - 1.0).abs() < 1e-12);
        for delta in [1.0, 1e3, 3e4, 2e5] {
            let up = susceptibility(&osc, osc.omega_m + delta).norm();
            let dn = susceptibility(&osc, osc.omega_m - delta).norm();
            assert!((up / dn - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_optimum_is_sql() {
        let osc = MechanicalOscillator { nu: 0.0, ..MechanicalOscillator::reference() };
        let s = force_sensitivity(&osc, &meas(1.0, 0.5), osc.omega_m).unwrap();
        assert!((s / sql_sensitivity(&osc) - 1.0).abs() < 1e-14);
        assert!((min_sensitivity(&osc, 1.0) / sql_sensitivity(&osc) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn corrected_optimum_ratio() {
        let osc = MechanicalOscillator::reference();
        let eps: f64 = 0.056;
        let c = optimal_cooperativity(eps);
        let ratio = force_sensitivity(&osc, &meas(eps, c), osc.omega_m).unwrap()
            / sql_sensitivity(&osc);
        let expected = ((2.0 * 1.2 + 1.0) + 1.0 / eps.sqrt()) / 2.0;
        assert!((ratio - expected).abs() < 1e-12);
        assert!((ratio - 3.81).abs() < 0.01);
    }

    #[test]
    fn zero_cooperativity_rejected() {
        let osc = MechanicalOscillator::reference();
        let err = force_sensitivity(&osc, &meas(0.5, 0.0), osc.omega_m).unwrap_err();
        assert_eq!(err, Error::ZeroCooperativity);
    }

    #[test]
    fn small_cooperativity_is_shot_noise_dominated() {
        let osc = MechanicalOscillator::reference();
        let a = force_sensitivity(&osc, &meas(0.056, 1e-4), osc.omega_m).unwrap();
        let b = force_sensitivity(&osc, &meas(0.056, 1e-5), osc.omega_m).unwrap();
        assert!((b / a - 10.0).abs() < 0.01);
    }

    #[test]
    fn sql_scalings() {
        let osc = reference_osc_18();
        assert!((sql_sensitivity(&osc) / 4.945979798335066e-46 - 1.0).abs() < 1e-12);
        let wide = MechanicalOscillator { gamma: 2.0 * osc.gamma, ..osc };
        assert!((sql_sensitivity(&wide) / sql_sensitivity(&osc) - 2.0).abs() < 1e-14);
        let heavy = MechanicalOscillator { m_atom: 4.0 * osc.m_atom, ..osc };
        assert!((sql_sensitivity(&heavy) / sql_sensitivity(&osc) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn min_sensitivity_nominal_scale() {
        let osc = MechanicalOscillator::reference();
        let yn = (min_sensitivity(&osc, 0.056) * 1e48).sqrt();
        assert!((41.0..=43.0).contains(&yn), "{yn}");
    }

    #[test]
    fn min_sensitivity_is_a_minimum() {
        let osc = MechanicalOscillator::reference();
        let floor = min_sensitivity(&osc, 0.056);
        for i in 0..400 {
            let c = 0.01 * 1.03f64.powi(i);
            let s = force_sensitivity(&osc, &meas(0.056, c), osc.omega_m).unwrap();
            assert!(s >= floor * (1.0 - 1e-14));
        }
    }

    #[test]
    fn optimal_cooperativity_values() {
        assert!((optimal_cooperativity(0.056) - 2.11).abs() < 0.01);
        assert_eq!(optimal_cooperativity(1.0), 0.5);
        assert_eq!(optimal_cooperativity(0.25), 1.0);
    }

    #[test]
    fn photon_spectrum_limits() {
        let osc = MechanicalOscillator::reference();
        let mut m = meas(0.056, 2.0);
        // hand evaluation: (C/2)·4·(2ν+1+C)
        assert!((photon_spectrum_pm(&osc, &m, osc.omega_m) - 21.6).abs() < 1e-12);
        m.kappa = Some(1e3 * osc.omega_m);
        let near = photon_spectrum_pm(&osc, &m, osc.omega_m);
        assert!((near / 21.6 - 1.0).abs() < 1e-5);
        m.kappa = Some(1.0);
        assert!(photon_spectrum_pm(&osc, &m, osc.omega_m) < 1e-10);
    }

    #[test]
    fn heterodyne_psd_values() {
        let osc = MechanicalOscillator::reference();
        let m = meas(0.056, 2.0);
        let peak = heterodyne_psd_pm(&osc, &m, osc.omega_m) / m.s_sn;
        assert!((peak - 0.5 * (1.0 + 4.0 * 0.056 * 2.0 * 5.4)).abs() < 1e-12);
        assert!((peak - 1.71).abs() < 0.01);
        let far = heterodyne_psd_pm(&osc, &m, osc.omega_m + 1e4 * osc.gamma) / m.s_sn;
        assert!((far - 0.5).abs() < 1e-7);
        let mut last = 0.0;
        for c in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let v = heterodyne_psd_pm(&osc, &meas(0.056, c), osc.omega_m);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn cavity_filter_path_matches_resolved_form_for_wide_cavity() {
        let osc = MechanicalOscillator::reference();
        let mut m = meas(0.056, 2.0);
        let resolved = heterodyne_psd_pm(&osc, &m, osc.omega_m + 1e3);
        m.kappa = Some(1e4 * osc.omega_m);
        m.cavity_filter = true;
        let filtered = heterodyne_psd_pm(&osc, &m, osc.omega_m + 1e3);
        assert!((filtered / resolved - 1.0).abs() < 1e-7);
    }

    #[test]
    fn transduction_regression_and_scaling() {
        let osc = MechanicalOscillator::reference();
        let m = MeasurementConfig::reference(2.0);
        let t = transduction(&osc, &m, osc.omega_m);
        assert!((t / 489_582_049_858.542_3 - 1.0).abs() < 1e-10);
        assert!(t > transduction(&osc, &m, osc.omega_m + 0.3 * osc.gamma));
        assert!(t > transduction(&osc, &m, osc.omega_m - 0.3 * osc.gamma));
        let t4 = transduction(&osc, &m.with_cooperativity(4.0), osc.omega_m);
        assert!((t4 / t - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn uncertainty_bound_values() {
        let b = uncertainty_bound(1.2, 0.056, 1e-3, angular(3e3)).unwrap();
        assert!((b - 0.81).abs() < 0.01);
        assert!((uncertainty_bound(0.0, 1.0, 2.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let half = uncertainty_bound(1.2, 0.056, 0.5e-3, angular(3e3)).unwrap();
        assert!((half / b - 2.0).abs() < 1e-14);
        assert!(uncertainty_bound(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn bound_equals_imprecision_product_at_minimum() {
        let osc = MechanicalOscillator::reference();
        let eps = 0.056;
        let via_chi = position_imprecision_product(&osc, min_sensitivity(&osc, eps), 1e-3);
        let bound = uncertainty_bound(osc.nu, eps, 1e-3, osc.gamma).unwrap();
        assert!((via_chi / bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acceleration_scale() {
        let osc = reference_osc_18();
        let a = acceleration_sensitivity(&osc, min_sensitivity(&osc, 0.056));
        assert!((0.02..=0.025).contains(&a), "{a}");
        let rb = MechanicalOscillator { m_atom: M_RB87, ..osc };
        assert!(acceleration_sensitivity(&rb, min_sensitivity(&rb, 0.056)) > 0.02);
    }
}
