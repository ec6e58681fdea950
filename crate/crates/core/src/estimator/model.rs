use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{ComplexSpectrum, PowerSpectrum};
use crate::synth::{lorentzian_power, lorentzian_response};

/// How the peaks of the joint model are arranged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakLayout {
    pub n_peaks: usize,
    /// Spacing between adjacent levels, rad/s; level `k` sits at
    /// `ω_m − k·splitting` unless spacing is free.
    pub splitting: f64,
    pub free_spacing: bool,
    /// Shot-noise floor S_SN/2 held fixed at this value when set.
    pub pinned_floor: Option<f64>,
}

impl PeakLayout {
    pub fn single() -> Self {
        Self {
            n_peaks: 1,
            splitting: 1.0,
            free_spacing: false,
            pinned_floor: None,
        }
    }

    pub fn ladder(n_peaks: usize, splitting: f64) -> Self {
        Self {
            n_peaks,
            splitting,
            free_spacing: false,
            pinned_floor: None,
        }
    }
}

/// Parameters of the joint coherent/incoherent Lorentzian model:
///
/// - coherent: `T(ω) = Σ_k c_k (Γ/2)/(ω − ω_k + iΓ/2)`, so `|c_k| = A_sig,k`
///   and `arg c_k` is the phase offset of peak `k`;
/// - incoherent: `S(ω) = Σ_k A_NN,k (Γ/2)²/((ω−ω_k)² + (Γ/2)²) + S_SN/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFitModel {
    pub layout: PeakLayout,
    /// Ground-level resonance ω_m, rad/s.
    pub omega_m: f64,
    /// Shared full linewidth Γ, rad/s.
    pub gamma: f64,
    /// Complex coherent amplitude per peak, W/N.
    pub coherent: Vec<Complex64>,
    /// Incoherent peak height A_NN per peak, W²/Hz.
    pub noise_amplitude: Vec<f64>,
    /// Shot-noise floor S_SN/2, W²/Hz.
    pub floor: f64,
    /// `ω_k − ω_m` per peak (first entry 0).
    pub offsets: Vec<f64>,
}

impl JointFitModel {
    pub fn centers(&self) -> Vec<f64> {
        self.offsets.iter().map(|d| self.omega_m + d).collect()
    }

    pub fn a_sig(&self, k: usize) -> f64 {
        self.coherent[k].norm()
    }

    pub fn phase(&self, k: usize) -> f64 {
        self.coherent[k].arg()
    }

    pub fn coherent_at(&self, omega: f64) -> Complex64 {
        self.centers()
            .iter()
            .zip(&self.coherent)
            .map(|(wk, c)| c * lorentzian_response(omega - wk, self.gamma))
            .sum()
    }

    pub fn psd_at(&self, omega: f64) -> f64 {
        self.floor
            + self
                .centers()
                .iter()
                .zip(&self.noise_amplitude)
                .map(|(wk, a)| a * lorentzian_power(omega - wk, self.gamma))
                .sum::<f64>()
    }

    /// Response angle of the ground-level lineshape, −atan2(Γ/2, ω − ω_m).
    pub fn response_angle(&self, omega: f64) -> f64 {
        lorentzian_response(omega - self.omega_m, self.gamma).arg()
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        let n = self.layout.n_peaks;
        if n == 0 {
            return Err(Error::invalid("n_peaks", "must be at least 1"));
        }
        if self.coherent.len() != n || self.noise_amplitude.len() != n || self.offsets.len() != n {
            return Err(Error::invalid("n_peaks", "per-peak vectors have the wrong length"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid("gamma", "must be > 0"));
        }
        if !self.omega_m.is_finite() {
            return Err(Error::invalid("omega_m", "must be finite"));
        }
        if self.noise_amplitude.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::invalid("noise_amplitude", "must be >= 0"));
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(Error::invalid("floor", "must be >= 0"));
        }
        Ok(())
    }
}

/// Positions of the parameters in the fit vector.
///
/// Order: ω_m, Γ, (Re c_k, Im c_k) per peak, A_NN per peak, floor (when
/// free), offsets of peaks 1.. (when spacing is free).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamIndex {
    pub n_peaks: usize,
    pub floor_free: bool,
    pub spacing_free: bool,
}

impl ParamIndex {
    pub fn new(layout: &PeakLayout) -> Self {
        Self {
            n_peaks: layout.n_peaks,
            floor_free: layout.pinned_floor.is_none(),
            spacing_free: layout.free_spacing && layout.n_peaks > 1,
        }
    }

    pub const OMEGA_M: usize = 0;
    pub const GAMMA: usize = 1;

    pub fn re(&self, k: usize) -> usize {
        2 + 2 * k
    }

    pub fn im(&self, k: usize) -> usize {
        3 + 2 * k
    }

    pub fn noise(&self, k: usize) -> usize {
        2 + 2 * self.n_peaks + k
    }

    pub fn floor(&self) -> Option<usize> {
        self.floor_free.then_some(2 + 3 * self.n_peaks)
    }

    /// Offset parameter of peak `k >= 1`.
    pub fn offset(&self, k: usize) -> Option<usize> {
        (self.spacing_free && k >= 1)
            .then(|| 2 + 3 * self.n_peaks + usize::from(self.floor_free) + k - 1)
    }

    pub fn len(&self) -> usize {
        2 + 3 * self.n_peaks
            + usize::from(self.floor_free)
            + if self.spacing_free { self.n_peaks - 1 } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.len()];
        names[Self::OMEGA_M] = "omega_m".into();
        names[Self::GAMMA] = "gamma".into();
        for k in 0..self.n_peaks {
            names[self.re(k)] = format!("coherent_re[{k}]");
            names[self.im(k)] = format!("coherent_im[{k}]");
            names[self.noise(k)] = format!("noise_amplitude[{k}]");
            if let Some(i) = self.offset(k) {
                names[i] = format!("offset[{k}]");
            }
        }
        if let Some(i) = self.floor() {
            names[i] = "floor".into();
        }
        names
    }
}

/// Affine map between SI parameters and the O(1) coordinates the solver
/// works in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub freq_ref: f64,
    pub freq_scale: f64,
    pub coherent_scale: f64,
    pub psd_scale: f64,
}

impl Scaling {
    /// SI coordinates.
    pub const IDENTITY: Scaling = Scaling {
        freq_ref: 0.0,
        freq_scale: 1.0,
        coherent_scale: 1.0,
        psd_scale: 1.0,
    };

    /// Per-parameter factor d(SI)/d(normalized).
    pub fn factors(&self, index: &ParamIndex) -> Vec<f64> {
        let mut f = vec![0.0; index.len()];
        f[ParamIndex::OMEGA_M] = self.freq_scale;
        f[ParamIndex::GAMMA] = self.freq_scale;
        for k in 0..index.n_peaks {
            f[index.re(k)] = self.coherent_scale;
            f[index.im(k)] = self.coherent_scale;
            f[index.noise(k)] = self.psd_scale;
            if let Some(i) = index.offset(k) {
                f[i] = self.freq_scale;
            }
        }
        if let Some(i) = index.floor() {
            f[i] = self.psd_scale;
        }
        f
    }

    pub fn pack(&self, model: &JointFitModel, index: &ParamIndex) -> DVector<f64> {
        let mut x = DVector::zeros(index.len());
        x[ParamIndex::OMEGA_M] = (model.omega_m - self.freq_ref) / self.freq_scale;
        x[ParamIndex::GAMMA] = model.gamma / self.freq_scale;
        for k in 0..index.n_peaks {
            x[index.re(k)] = model.coherent[k].re / self.coherent_scale;
            x[index.im(k)] = model.coherent[k].im / self.coherent_scale;
            x[index.noise(k)] = model.noise_amplitude[k] / self.psd_scale;
            if let Some(i) = index.offset(k) {
                x[i] = model.offsets[k] / self.freq_scale;
            }
        }
        if let Some(i) = index.floor() {
            x[i] = model.floor / self.psd_scale;
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>, index: &ParamIndex, layout: &PeakLayout) -> JointFitModel {
        let n = index.n_peaks;
        let offsets = (0..n)
            .map(|k| match index.offset(k) {
                Some(i) => x[i] * self.freq_scale,
                None => -(k as f64) * layout.splitting,
            })
            .collect();
        JointFitModel {
            layout: layout.clone(),
            omega_m: self.freq_ref + x[ParamIndex::OMEGA_M] * self.freq_scale,
            gamma: x[ParamIndex::GAMMA] * self.freq_scale,
            coherent: (0..n)
                .map(|k| Complex64::new(x[index.re(k)], x[index.im(k)]) * self.coherent_scale)
                .collect(),
            noise_amplitude: (0..n).map(|k| x[index.noise(k)] * self.psd_scale).collect(),
            floor: match index.floor() {
                Some(i) => x[i] * self.psd_scale,
                None => layout.pinned_floor.unwrap_or(0.0),
            },
            offsets,
        }
    }
}

/// Weighted residuals of the joint model in normalized coordinates:
/// `[Re ΔT_i/σ_i, Im ΔT_i/σ_i]` for each coherent bin followed by
/// `ΔS_j/σ_j` for each PSD bin.
#[derive(Debug, Clone)]
pub struct JointProblem {
    pub index: ParamIndex,
    pub layout: PeakLayout,
    pub scaling: Scaling,
    coh_x: Vec<f64>,
    coh_y: Vec<Complex64>,
    coh_sigma: Vec<f64>,
    psd_x: Vec<f64>,
    psd_y: Vec<f64>,
    psd_sigma: Vec<f64>,
}

impl JointProblem {
    /// `coh_sigma` and `psd_sigma` are SI standard deviations (per quadrature
    /// for the coherent data).
    pub fn new(
        coh: &ComplexSpectrum,
        coh_sigma: &[f64],
        psd: &PowerSpectrum,
        psd_sigma: &[f64],
        layout: &PeakLayout,
        scaling: Scaling,
    ) -> Self {
        let fx = |w: &f64| (w - scaling.freq_ref) / scaling.freq_scale;
        Self {
            index: ParamIndex::new(layout),
            layout: layout.clone(),
            scaling,
            coh_x: coh.freqs.iter().map(fx).collect(),
            coh_y: coh.values.iter().map(|v| v / scaling.coherent_scale).collect(),
            coh_sigma: coh_sigma.iter().map(|s| s / scaling.coherent_scale).collect(),
            psd_x: psd.freqs.iter().map(fx).collect(),
            psd_y: psd.values.iter().map(|v| v / scaling.psd_scale).collect(),
            psd_sigma: psd_sigma.iter().map(|s| s / scaling.psd_scale).collect(),
        }
    }

    pub fn with_psd_sigma(&self, psd_sigma: &[f64]) -> Self {
        Self {
            psd_sigma: psd_sigma.iter().map(|s| s / self.scaling.psd_scale).collect(),
            ..self.clone()
        }
    }

    pub fn n_coherent_residuals(&self) -> usize {
        2 * self.coh_x.len()
    }

    pub fn n_residuals(&self) -> usize {
        2 * self.coh_x.len() + self.psd_x.len()
    }

    fn centers(&self, x: &DVector<f64>) -> Vec<f64> {
        let step = self.layout.splitting / self.scaling.freq_scale;
        (0..self.index.n_peaks)
            .map(|k| match self.index.offset(k) {
                Some(i) => x[ParamIndex::OMEGA_M] + x[i],
                None => x[ParamIndex::OMEGA_M] - k as f64 * step,
            })
            .collect()
    }

    fn floor(&self, x: &DVector<f64>) -> f64 {
        match self.index.floor() {
            Some(i) => x[i],
            None => self.layout.pinned_floor.unwrap_or(0.0) / self.scaling.psd_scale,
        }
    }

    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let idx = &self.index;
        let centers = self.centers(x);
        let h = x[ParamIndex::GAMMA] / 2.0;
        let mut r = DVector::zeros(self.n_residuals());
        for (i, (&u, y)) in self.coh_x.iter().zip(&self.coh_y).enumerate() {
            let mut t = Complex64::new(0.0, 0.0);
            for (k, mu) in centers.iter().enumerate() {
                let c = Complex64::new(x[idx.re(k)], x[idx.im(k)]);
                t += c * h / Complex64::new(u - mu, h);
            }
            let d = (t - y) / self.coh_sigma[i];
            r[2 * i] = d.re;
            r[2 * i + 1] = d.im;
        }
        let off = self.n_coherent_residuals();
        let floor = self.floor(x);
        for (j, (&u, y)) in self.psd_x.iter().zip(&self.psd_y).enumerate() {
            let mut s = floor;
            for (k, mu) in centers.iter().enumerate() {
                let d = u - mu;
                s += x[idx.noise(k)] * h * h / (d * d + h * h);
            }
            r[off + j] = (s - y) / self.psd_sigma[j];
        }
        r
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let idx = &self.index;
        let centers = self.centers(x);
        let h = x[ParamIndex::GAMMA] / 2.0;
        let mut jac = DMatrix::zeros(self.n_residuals(), idx.len());
        for (i, &u) in self.coh_x.iter().enumerate() {
            let s = self.coh_sigma[i];
            let (row_re, row_im) = (2 * i, 2 * i + 1);
            for (k, mu) in centers.iter().enumerate() {
                let c = Complex64::new(x[idx.re(k)], x[idx.im(k)]);
                let z = Complex64::new(u - mu, h);
                let g = h / z;
                let z2 = z * z;
                // ∂g/∂μ = h/z², ∂g/∂Γ = ½(u−μ)/z²
                let d_mu = c * h / z2;
                let d_gamma = c * 0.5 * (u - mu) / z2;
                let mut put = |col: usize, v: Complex64| {
                    jac[(row_re, col)] += v.re / s;
                    jac[(row_im, col)] += v.im / s;
                };
                put(ParamIndex::OMEGA_M, d_mu);
                put(ParamIndex::GAMMA, d_gamma);
                put(idx.re(k), g);
                put(idx.im(k), g * Complex64::i());
                if let Some(col) = idx.offset(k) {
                    put(col, d_mu);
                }
            }
        }
        let off = self.n_coherent_residuals();
        for (j, &u) in self.psd_x.iter().enumerate() {
            let s = self.psd_sigma[j];
            let row = off + j;
            for (k, mu) in centers.iter().enumerate() {
                let a = x[idx.noise(k)];
                let d = u - mu;
                let den = d * d + h * h;
                let l = h * h / den;
                let d_mu = a * 2.0 * d * h * h / (den * den);
                let d_gamma = a * h * d * d / (den * den);
                jac[(row, ParamIndex::OMEGA_M)] += d_mu / s;
                jac[(row, ParamIndex::GAMMA)] += d_gamma / s;
                jac[(row, idx.noise(k))] += l / s;
                if let Some(col) = idx.offset(k) {
                    jac[(row, col)] += d_mu / s;
                }
            }
            if let Some(col) = idx.floor() {
                jac[(row, col)] = 1.0 / s;
            }
        }
        jac
    }

    /// Keeps Γ positive and the incoherent amplitudes and floor non-negative.
    /// Lower bound of every parameter in solver coordinates.
    pub fn lower_bounds(&self) -> Vec<f64> {
        let mut lb = vec![f64::NEG_INFINITY; self.index.len()];
        lb[ParamIndex::GAMMA] = 1e-9;
        for k in 0..self.index.n_peaks {
            lb[self.index.noise(k)] = 0.0;
        }
        if let Some(i) = self.index.floor() {
            lb[i] = 0.0;
        }
        lb
    }

    pub fn project(&self, x: &mut DVector<f64>) {
        for (v, lb) in x.iter_mut().zip(self.lower_bounds()) {
            *v = v.max(lb);
        }
    }

    /// Largest column-relative deviation between the analytic Jacobian and
    /// central finite differences of the residuals.
    pub fn jacobian_fd_error(&self, x: &DVector<f64>) -> f64 {
        let jac = self.jacobian(x);
        let mut worst: f64 = 0.0;
        for col in 0..x.len() {
            let h = 1e-6 * x[col].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let fd = (self.residuals(&xp) - self.residuals(&xm)) / (2.0 * h);
            let analytic = jac.column(col);
            let scale = analytic.amax().max(f64::MIN_POSITIVE);
            worst = worst.max((fd - analytic).amax() / scale);
        }
        worst
    }
}
