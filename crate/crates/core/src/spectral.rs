//! Low-frequency Fourier power spectra of transmission curves and the
//! secondary losses built on them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::mse_loss;
use crate::scalar::Scalar;

/// Number of retained frequency bins (1..=BINS cycles across the window).
pub const BINS: usize = 10;

/// Raw power below this counts as a flat curve.
const FLAT_POWER: f64 = 1e-12;

/// Normalized power in frequency bins `1..=10`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub powers: [f64; BINS],
}

impl PowerSpectrum {
    pub fn uniform() -> Self {
        Self {
            powers: [1.0 / BINS as f64; BINS],
        }
    }

    /// Index (1-based frequency) of the strongest bin.
    pub fn dominant_frequency(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.powers.iter().enumerate() {
            if p > self.powers[best] {
                best = k;
            }
        }
        best + 1
    }
}

/// Precomputed twiddle factors for bins `1..=10` of an `n`-point window.
#[derive(Clone, Debug)]
pub struct LowDft {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl LowDft {
    pub fn new(n: usize) -> Result<Self> {
        if n <= 2 * BINS {
            return Err(Error::shape("power spectrum input", 2 * BINS + 1, n));
        }
        let mut cos = Vec::with_capacity(BINS * n);
        let mut sin = Vec::with_capacity(BINS * n);
        for k in 1..=BINS {
            for j in 0..n {
                // reduce k*j mod n first so the angle stays in [0, 2 pi)
                let (s, c) = (2.0 * PI * ((k * j) % n) as f64 / n as f64).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(Self { n, cos, sin })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized `|sum_j x_j exp(-2 pi i j k / N)|^2` for `k = 1..=10`.
    pub fn raw_powers<S: Scalar>(&self, values: &[S]) -> Result<[f64; BINS]> {
        if values.len() != self.n {
            return Err(Error::shape("power spectrum input", self.n, values.len()));
        }
        let mut out = [0.0; BINS];
        for (k, slot) in out.iter_mut().enumerate() {
            let c = &self.cos[k * self.n..(k + 1) * self.n];
            let s = &self.sin[k * self.n..(k + 1) * self.n];
            let (mut re, mut im) = (0.0, 0.0);
            for ((&x, &ck), &sk) in values.iter().zip(c).zip(s) {
                let x = x.as_f64();
                re += x * ck;
                im -= x * sk;
            }
            *slot = re * re + im * im;
        }
        Ok(out)
    }

    /// Power normalized to unit sum; flat input (total raw power below
    /// 1e-12) maps to the uniform vector.
    pub fn power_spectrum<S: Scalar>(&self, values: &[S]) -> Result<PowerSpectrum> {
        let raw = self.raw_powers(values)?;
        let total: f64 = raw.iter().sum();
        if !(total >= FLAT_POWER) {
            return Ok(PowerSpectrum::uniform());
        }
        Ok(PowerSpectrum {
            powers: raw.map(|p| p / total),
        })
    }
}

/// Unnormalized power in bins `1..=10`; see [`LowDft::raw_powers`].
pub fn raw_bin_powers<S: Scalar>(values: &[S]) -> Result<[f64; BINS]> {
    LowDft::new(values.len())?.raw_powers(values)
}

/// Power in bins 1..=10 normalized to unit sum. A flat curve (total raw
/// power below 1e-12) maps to the uniform vector.
pub fn power_spectrum<S: Scalar>(values: &[S]) -> Result<PowerSpectrum> {
    LowDft::new(values.len())?.power_spectrum(values)
}

/// Mean squared difference over the 10 bins.
pub fn fourier_mse(a: &PowerSpectrum, b: &PowerSpectrum) -> f64 {
    a.powers
        .iter()
        .zip(&b.powers)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / BINS as f64
}

/// Term weights for [`combined_loss`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub transmission: f64,
    pub fourier: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            transmission: 1.0,
            fourier: 1.0,
        }
    }
}

/// Weighted sum of transmission MSE and power-spectrum MSE.
pub fn combined_loss<S: Scalar>(pred: &[S], target: &[S], weights: LossWeights) -> Result<f64> {
    let t = mse_loss(pred, target)?.as_f64();
    let f = fourier_mse(&power_spectrum(pred)?, &power_spectrum(target)?);
    Ok(weights.transmission * t + weights.fourier * f)
}
