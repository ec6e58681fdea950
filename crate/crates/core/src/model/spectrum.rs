use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const UNIFORM_TOL: f64 = 1e-6;

/// Uniform grid `center + k * spacing` for `k` in `-below..=above`.
pub fn uniform_grid(center: f64, spacing: f64, below: usize, above: usize) -> Vec<f64> {
    (-(below as i64)..=above as i64)
        .map(|k| center + k as f64 * spacing)
        .collect()
}

fn check_grid(freqs: &[f64]) -> Result<()> {
    if freqs.is_empty() {
        return Err(Error::InvalidSpectrum("empty frequency grid".into()));
    }
    if freqs.iter().any(|f| !f.is_finite()) {
        return Err(Error::InvalidSpectrum("non-finite frequency".into()));
    }
    if freqs.len() < 2 {
        return Ok(());
    }
    let spacing = freqs[1] - freqs[0];
    if spacing <= 0.0 {
        return Err(Error::InvalidSpectrum("frequencies must increase".into()));
    }
    for w in freqs.windows(2) {
        let d = w[1] - w[0];
        if d <= 0.0 {
            return Err(Error::InvalidSpectrum("frequencies must increase".into()));
        }
        if ((d - spacing) / spacing).abs() > UNIFORM_TOL {
            return Err(Error::InvalidSpectrum("grid spacing is not uniform".into()));
        }
    }
    Ok(())
}

fn grid_spacing(freqs: &[f64]) -> Option<f64> {
    (freqs.len() >= 2).then(|| (freqs[freqs.len() - 1] - freqs[0]) / (freqs.len() - 1) as f64)
}

fn nearest(freqs: &[f64], omega: f64) -> Option<usize> {
    let (idx, dist) = freqs
        .iter()
        .enumerate()
        .map(|(i, f)| (i, (f - omega).abs()))
        .fold((usize::MAX, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        });
    if idx == usize::MAX {
        return None;
    }
    match grid_spacing(freqs) {
        Some(h) if dist > 0.5 * h * (1.0 + 1e-9) => None,
        _ => Some(idx),
    }
}

/// Complex spectral response on a uniform angular-frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub n_avg: usize,
    /// Per-quadrature variance of each value, when known (e.g. from the
    /// scatter of the averaged repetitions).
    pub variance: Option<Vec<f64>>,
}

impl ComplexSpectrum {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>, n_avg: usize) -> Result<Self> {
        let s = Self {
            freqs,
            values,
            n_avg,
            variance: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.freqs)?;
        if self.values.len() != self.freqs.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} values for {} frequencies",
                self.values.len(),
                self.freqs.len()
            )));
        }
        if self.values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidSpectrum("non-finite value".into()));
        }
        if self.n_avg == 0 {
            return Err(Error::InvalidSpectrum("n_avg must be at least 1".into()));
        }
        if let Some(var) = &self.variance {
            if var.len() != self.freqs.len() || var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidSpectrum("bad variance vector".into()));
            }
        }
        Ok(())
    }

    pub fn spacing(&self) -> Option<f64> {
        grid_spacing(&self.freqs)
    }

    /// Index of the bin within half a spacing of `omega`.
    pub fn nearest_bin(&self, omega: f64) -> Option<usize> {
        nearest(&self.freqs, omega)
    }

    /// Mean of equally weighted repetitions on a common grid. The variance
    /// field carries the per-quadrature variance of the mean estimated from
    /// the scatter of the repetitions (pooled over both quadratures).
    pub fn average(reps: &[ComplexSpectrum]) -> Result<ComplexSpectrum> {
        let first = reps
            .first()
            .ok_or_else(|| Error::InvalidSpectrum("no repetitions to average".into()))?;
        for r in reps {
            if r.freqs != first.freqs {
                return Err(Error::InvalidSpectrum("repetition grids differ".into()));
            }
        }
        let n = reps.len();
        let nf = n as f64;
        let bins = first.freqs.len();
        let mut mean = vec![Complex64::new(0.0, 0.0); bins];
        for r in reps {
            for (m, v) in mean.iter_mut().zip(&r.values) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= nf;
        }
        let variance = (n > 1).then(|| {
            (0..bins)
                .map(|b| {
                    let ss: f64 = reps.iter().map(|r| (r.values[b] - mean[b]).norm_sqr()).sum();
                    // two quadratures, n - 1 dof each; variance of the mean
                    ss / (2.0 * (nf - 1.0)) / nf
                })
                .collect()
        });
        let out = ComplexSpectrum {
            freqs: first.freqs.clone(),
            values: mean,
            n_avg: reps.iter().map(|r| r.n_avg).sum(),
            variance,
        };
        out.validate()?;
        Ok(out)
    }

    /// Multiplies every value by a positive real factor (e.g. 1/F₀ to turn
    /// a response into a transduction).
    pub fn scaled(&self, factor: f64) -> ComplexSpectrum {
        ComplexSpectrum {
            freqs: self.freqs.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            n_avg: self.n_avg,
            variance: self
                .variance
                .as_ref()
                .map(|var| var.iter().map(|v| v * factor * factor).collect()),
        }
    }

    pub fn shifted(&self, delta: f64) -> ComplexSpectrum {
        ComplexSpectrum {
            freqs: self.freqs.iter().map(|f| f + delta).collect(),
            ..self.clone()
        }
    }
}

/// Averaged power spectral density on a uniform angular-frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub n_avg: usize,
}

impl PowerSpectrum {
    pub fn new(freqs: Vec<f64>, values: Vec<f64>, n_avg: usize) -> Result<Self> {
        let s = Self {
            freqs,
            values,
            n_avg,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.freqs)?;
        if self.values.len() != self.freqs.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} values for {} frequencies",
                self.values.len(),
                self.freqs.len()
            )));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidSpectrum(
                "PSD values must be finite and non-negative".into(),
            ));
        }
        if self.n_avg == 0 {
            return Err(Error::InvalidSpectrum("n_avg must be at least 1".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> Option<f64> {
        grid_spacing(&self.freqs)
    }

    pub fn nearest_bin(&self, omega: f64) -> Option<usize> {
        nearest(&self.freqs, omega)
    }

    /// Equal-weight average with a second spectrum on the same grid, e.g. the
    /// PSD recorded with the drive far off resonance. The effective averaging
    /// count follows from the variance of the equal-weight mean.
    pub fn average_equal_weight(&self, other: &PowerSpectrum) -> Result<PowerSpectrum> {
        if self.freqs != other.freqs {
            return Err(Error::InvalidSpectrum("PSD grids differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let (na, nb) = (self.n_avg as f64, other.n_avg as f64);
        let n_eff = (4.0 / (1.0 / na + 1.0 / nb)).round() as usize;
        PowerSpectrum::new(self.freqs.clone(), values, n_eff.max(1))
    }

    pub fn shifted(&self, delta: f64) -> PowerSpectrum {
        PowerSpectrum {
            freqs: self.freqs.iter().map(|f| f + delta).collect(),
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> PowerSpectrum {
        PowerSpectrum {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contract() {
        assert!(ComplexSpectrum::new(vec![], vec![], 1).is_err());
        assert!(PowerSpectrum::new(vec![1.0, 3.0, 4.0], vec![1.0; 3], 1).is_err());
        assert!(PowerSpectrum::new(vec![1.0, 2.0, 3.0], vec![1.0, -1.0, 1.0], 1).is_err());
        assert!(PowerSpectrum::new(vec![3.0, 2.0], vec![1.0; 2], 1).is_err());
        assert!(PowerSpectrum::new(uniform_grid(10.0, 0.5, 3, 3), vec![1.0; 7], 1).is_ok());
    }

    #[test]
    fn nearest_bin_within_half_spacing() {
        let s = PowerSpectrum::new(uniform_grid(10.0, 1.0, 2, 2), vec![0.0; 5], 1).unwrap();
        assert_eq!(s.nearest_bin(10.2), Some(2));
        assert_eq!(s.nearest_bin(11.6), Some(4));
        assert_eq!(s.nearest_bin(12.4), Some(4));
        assert_eq!(s.nearest_bin(12.6), None);
    }

    #[test]
    fn average_reports_variance_of_mean() {
        let freqs = vec![1.0, 2.0];
        let reps = vec![
            ComplexSpectrum::new(freqs.clone(), vec![Complex64::new(1.0, 1.0); 2], 1).unwrap(),
            ComplexSpectrum::new(freqs.clone(), vec![Complex64::new(-1.0, -1.0); 2], 1).unwrap(),
        ];
        let avg = ComplexSpectrum::average(&reps).unwrap();
        assert_eq!(avg.values[0], Complex64::new(0.0, 0.0));
        assert_eq!(avg.n_avg, 2);
        // per quadrature sample variance 2, variance of mean 1
        assert!((avg.variance.unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_weight_average_counts() {
        let g = vec![1.0, 2.0];
        let a = PowerSpectrum::new(g.clone(), vec![1.0, 3.0], 100).unwrap();
        let b = PowerSpectrum::new(g, vec![3.0, 1.0], 100).unwrap();
        let m = a.average_equal_weight(&b).unwrap();
        assert_eq!(m.values, vec![2.0, 2.0]);
        assert_eq!(m.n_avg, 200);
    }
}
