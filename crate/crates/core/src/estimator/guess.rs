use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::model::{JointFitModel, PeakLayout};
use crate::model::{ComplexSpectrum, PowerSpectrum};
use crate::synth::{lorentzian_power, lorentzian_response};
use crate::{Error, Result};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median and scaled median absolute deviation of the outer fifth of the
/// grid on each side.
fn edge_floor(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let k = n.div_ceil(5).max(1).min(n);
    let mut edge: Vec<f64> = values[..k].to_vec();
    edge.extend_from_slice(&values[(n - k).max(k)..]);
    let med = median(edge.clone());
    let mad = median(edge.iter().map(|v| (v - med).abs()).collect());
    (med, 1.4826 * mad)
}

/// Vertex and half-width of the parabola through 1/(S − floor) at three
/// neighbouring bins; exact for a noiseless Lorentzian.
fn lorentz_vertex(psd: &Peaked, peak: usize, floor: f64) -> Option<(f64, f64)> {
    if peak == 0 || peak + 1 >= psd.values.len() {
        return None;
    }
    let xs = [psd.freqs[peak - 1], psd.freqs[peak], psd.freqs[peak + 1]];
    let mut ys = [0.0; 3];
    for (y, v) in ys.iter_mut().zip(&psd.values[peak - 1..=peak + 1]) {
        let e = v - floor;
        if e <= 0.0 {
            return None;
        }
        *y = 1.0 / e;
    }
    let h = xs[1] - xs[0];
    let curv = (ys[0] - 2.0 * ys[1] + ys[2]) / (2.0 * h * h);
    if !(curv > 0.0) {
        return None;
    }
    let slope = (ys[2] - ys[0]) / (2.0 * h);
    let vertex = xs[1] - slope / (2.0 * curv);
    let base = ys[1] - slope * slope / (4.0 * curv);
    if !(base > 0.0) || (vertex - xs[1]).abs() > h {
        return None;
    }
    let half_width = (base / curv).sqrt();
    let span = psd.freqs[psd.freqs.len() - 1] - psd.freqs[0];
    (half_width > 0.15 * h && 2.0 * half_width < span).then_some((vertex, 2.0 * half_width))
}

/// Full width at half maximum above the floor by linear interpolation.
fn half_power_width(psd: &Peaked, peak: usize, floor: f64) -> Option<f64> {
    let half = floor + 0.5 * (psd.values[peak] - floor);
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = peak;
        for i in range {
            if psd.values[i] <= half {
                let (v0, v1) = (psd.values[prev], psd.values[i]);
                let t = (v0 - half) / (v0 - v1);
                return Some(psd.freqs[prev] + t * (psd.freqs[i] - psd.freqs[prev]));
            }
            prev = i;
        }
        None
    };
    let hi = crossing(&mut (peak + 1..psd.values.len()));
    let lo = crossing(&mut (0..peak).rev());
    let centre = psd.freqs[peak];
    match (lo, hi) {
        (Some(l), Some(h)) => Some(h - l),
        (Some(l), None) => Some(2.0 * (centre - l)),
        (None, Some(h)) => Some(2.0 * (h - centre)),
        (None, None) => None,
    }
}

/// A real spectrum searched for its resonance.
struct Peaked<'a> {
    freqs: &'a [f64],
    values: Vec<f64>,
}

impl Peaked<'_> {
    /// Highest bin (lowest frequency on ties), its excess over the edge
    /// median and the edge spread.
    fn peak(&self) -> (usize, f64, f64) {
        let (median, spread) = edge_floor(&self.values);
        let mut peak = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[peak] {
                peak = i;
            }
        }
        (peak, self.values[peak] - median, spread)
    }

    fn resonance(&self, peak: usize, floor: f64) -> Option<(f64, f64)> {
        lorentz_vertex(self, peak, floor).or_else(|| {
            half_power_width(self, peak, floor).map(|width| (self.freqs[peak], width))
        })
    }
}

fn offsets(layout: &PeakLayout) -> Vec<f64> {
    (0..layout.n_peaks)
        .map(|k| -(k as f64) * layout.splitting)
        .collect()
}

/// Starting point for [`super::fit_joint`].
///
/// The floor is the median of the outer PSD bins. ω_m is the maximum
/// (lowest frequency on ties) of whichever of the PSD and the coherent
/// power |T|² stands out more clearly above its edge scatter, refined by a
/// three-point Lorentzian vertex; Γ is the corresponding width (half-power
/// width as fallback). With ω_m and Γ fixed the model is linear in the
/// amplitudes, which are then obtained by linear least squares.
pub fn initial_guess(
    coh: &ComplexSpectrum,
    psd: &PowerSpectrum,
    layout: &PeakLayout,
) -> Result<JointFitModel> {
    coh.validate()?;
    psd.validate()?;
    if layout.n_peaks == 0 {
        return Err(Error::invalid("n_peaks", "must be at least 1"));
    }
    let (edge_median, _) = edge_floor(&psd.values);
    let floor = layout.pinned_floor.unwrap_or(edge_median);

    let incoherent = Peaked {
        freqs: &psd.freqs,
        values: psd.values.clone(),
    };
    let coherent = Peaked {
        freqs: &coh.freqs,
        values: coh.values.iter().map(|v| v.norm_sqr()).collect(),
    };
    let significance = |(_, excess, spread): (usize, f64, f64)| {
        if excess > 0.0 && excess > 3.0 * spread {
            if spread > 0.0 { excess / spread } else { f64::INFINITY }
        } else {
            0.0
        }
    };
    let (p_inc, p_coh) = (incoherent.peak(), coherent.peak());
    let mut candidates = [
        (significance(p_inc), &incoherent, p_inc.0, floor),
        // the coherent response has no floor, only a small noise bias
        (significance(p_coh), &coherent, p_coh.0, 0.0),
    ];
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (omega_m, gamma) = candidates
        .iter()
        .filter(|c| c.0 > 0.0)
        .find_map(|&(_, spectrum, peak, base)| spectrum.resonance(peak, base))
        .ok_or(Error::NoResonance {
            excess: p_inc.1,
            spread: p_inc.2,
        })?;

    let offsets = offsets(layout);
    let centers: Vec<f64> = offsets.iter().map(|d| omega_m + d).collect();
    let n = layout.n_peaks;

    // complex amplitudes: [Re; Im] rows against [Re c; Im c] columns
    let rows = coh.freqs.len();
    let mut a = DMatrix::zeros(2 * rows, 2 * n);
    let mut b = DVector::zeros(2 * rows);
    for (i, w) in coh.freqs.iter().enumerate() {
        for (k, c) in centers.iter().enumerate() {
            let g = lorentzian_response(w - c, gamma);
            a[(2 * i, 2 * k)] = g.re;
            a[(2 * i, 2 * k + 1)] = -g.im;
            a[(2 * i + 1, 2 * k)] = g.im;
            a[(2 * i + 1, 2 * k + 1)] = g.re;
        }
        b[2 * i] = coh.values[i].re;
        b[2 * i + 1] = coh.values[i].im;
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidSpectrum(e.into()))?;
    let coherent = (0..n)
        .map(|k| Complex64::new(sol[2 * k], sol[2 * k + 1]))
        .collect();

    let mut p = DMatrix::zeros(psd.freqs.len(), n);
    let mut q = DVector::zeros(psd.freqs.len());
    for (j, w) in psd.freqs.iter().enumerate() {
        for (k, c) in centers.iter().enumerate() {
            p[(j, k)] = lorentzian_power(w - c, gamma);
        }
        q[j] = psd.values[j] - floor;
    }
    let amps = p
        .svd(true, true)
        .solve(&q, 1e-12)
        .map_err(|e| Error::InvalidSpectrum(e.into()))?;
    let noise_amplitude = amps.iter().map(|v| v.max(0.0)).collect();

    let model = JointFitModel {
        layout: layout.clone(),
        omega_m,
        gamma,
        coherent,
        noise_amplitude,
        floor,
        offsets,
    };
    model.validate()?;
    Ok(model)
}
