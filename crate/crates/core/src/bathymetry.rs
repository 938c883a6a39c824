//! Periodic bottom profiles described by finitely many Fourier modes.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default magnitude below which sampled modes are dropped.
pub const DEFAULT_SAMPLE_FLOOR: f64 = 1e-14;

/// One term a·cos(kx + φ) of a cosine series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineTerm {
    pub k: i64,
    pub amplitude: f64,
    pub phase: f64,
}

/// A real, zero-mean, 2π-periodic bottom variation b with finitely many modes.
///
/// Coefficients follow b(x) = Σ_k b̂_k e^{ikx} with b̂_{-k} = conj(b̂_k).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BathymetryProfile {
    coeffs: BTreeMap<i64, Complex64>,
    max_mode: usize,
}

impl BathymetryProfile {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn from_cosine_series(terms: &[CosineTerm]) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for t in terms {
            if t.k == 0 {
                return Err(Error::InvalidProfile(
                    "cosine term with k = 0 would change the mean depth".into(),
                ));
            }
            if t.k < 0 {
                return Err(Error::InvalidProfile(format!(
                    "cosine term wavenumber must be positive, got {}",
                    t.k
                )));
            }
            if !(t.amplitude.is_finite() && t.phase.is_finite()) {
                return Err(Error::InvalidProfile(format!(
                    "non-finite cosine term for k = {}",
                    t.k
                )));
            }
            if seen.insert(t.k, ()).is_some() {
                return Err(Error::InvalidProfile(format!("duplicate cosine term k = {}", t.k)));
            }
        }
        let pairs = terms
            .iter()
            .map(|t| (t.k, Complex64::from_polar(0.5 * t.amplitude, t.phase)));
        Ok(Self::from_positive_modes(pairs))
    }

    /// Builds a profile from b̂_k for k ≥ 1; negative modes are filled by conjugation.
    pub fn from_fourier(entries: &[(i64, Complex64)]) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for &(k, c) in entries {
            if k <= 0 {
                return Err(Error::InvalidProfile(format!(
                    "Fourier entries must use k >= 1 (negative modes follow by conjugation), got {k}"
                )));
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::InvalidProfile(format!("non-finite coefficient for k = {k}")));
            }
            if seen.insert(k, ()).is_some() {
                return Err(Error::InvalidProfile(format!("duplicate Fourier entry k = {k}")));
            }
        }
        Ok(Self::from_positive_modes(entries.iter().copied()))
    }

    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        Self::from_samples_with_floor(samples, DEFAULT_SAMPLE_FLOOR)
    }

    /// Discrete Fourier analysis of b sampled at x_j = 2πj/M.
    pub fn from_samples_with_floor(samples: &[f64], floor: f64) -> Result<Self> {
        let m = samples.len();
        if m < 4 || m % 2 != 0 {
            return Err(Error::InvalidProfile(format!(
                "sample count must be even and at least 4, got {m}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("sample {i} is not finite")));
        }
        let mean = samples.iter().sum::<f64>() / m as f64;
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let scale = 1.0 / m as f64;
        let mut pairs = Vec::new();
        for k in 1..(m / 2) {
            // Average the two conjugate bins so the result is exactly Hermitian.
            let c = 0.5 * (buf[k] + buf[m - k].conj()) * scale;
            if c.norm() > floor {
                pairs.push((k as i64, c));
            }
        }
        Ok(Self::from_positive_modes(pairs))
    }

    fn from_positive_modes(pairs: impl IntoIterator<Item = (i64, Complex64)>) -> Self {
        let mut coeffs = BTreeMap::new();
        let mut max_mode = 0;
        for (k, c) in pairs {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            coeffs.insert(k, c);
            coeffs.insert(-k, c.conj());
            max_mode = max_mode.max(k as usize);
        }
        Self { coeffs, max_mode }
    }

    pub fn is_flat(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// b̂_k, zero when the mode is absent.
    pub fn fourier_coefficient(&self, k: i64) -> Complex64 {
        self.coeffs.get(&k).copied().unwrap_or_default()
    }

    /// Stored (k, b̂_k) pairs over both signs of k, ascending in k.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (k, c))
    }

    fn series(&self, x: f64, order: u32) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (&k, &c) in &self.coeffs {
            let ik = Complex64::new(0.0, k as f64).powu(order);
            acc += c * ik * Complex64::from_polar(1.0, k as f64 * x);
            scale += c.norm() * (k.unsigned_abs() as f64).powi(order as i32);
        }
        debug_assert!(acc.im.abs() <= 1e-13 * scale.max(1.0));
        acc.re
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.series(x, 0)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.series(x, 1)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.series(x, 2)
    }

    /// The profile b(−x), whose coefficients are the conjugates of these.
    pub fn reflected(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|(&k, &c)| (k, c.conj())).collect(),
            max_mode: self.max_mode,
        }
    }

    /// sup_x |b(x)|, located by dense sampling and Newton polishing.
    pub fn sup_norm(&self) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        let m = (64 * self.max_mode).max(512);
        let h = 2.0 * PI / m as f64;
        let mut best = (0.0, 0.0);
        for j in 0..m {
            let x = j as f64 * h;
            let v = self.evaluate(x).abs();
            if v > best.1 {
                best = (x, v);
            }
        }
        let mut x = best.0;
        for _ in 0..20 {
            let d2 = self.second_derivative(x);
            if d2 == 0.0 {
                break;
            }
            let step = self.derivative(x) / d2;
            if !step.is_finite() || step.abs() > h {
                break;
            }
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        best.1.max(self.evaluate(x).abs())
    }

    /// Rejects ε with ε·sup|b| ≥ 1, for which the fluid layer pinches off.
    pub fn check_epsilon(&self, epsilon: f64) -> Result<()> {
        let max_abs_b = self.sup_norm();
        let product = epsilon.abs() * max_abs_b;
        if !epsilon.is_finite() || product >= 1.0 {
            return Err(Error::DegenerateDomain {
                epsilon,
                max_abs_b,
                product,
            });
        }
        Ok(())
    }

    /// Hex SHA-256 over the coefficient bit patterns, for output provenance.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (&k, c) in &self.coeffs {
            h.update(k.to_le_bytes());
            h.update(c.re.to_bits().to_le_bytes());
            h.update(c.im.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
