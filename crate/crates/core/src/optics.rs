//! Closed-form Fabry-Perot transmission for a lossless dielectric slab in
//! air under TE illumination.
//!
//! Angles cross the public API in degrees and are converted to radians
//! internally. Lengths are in nanometers.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Physical design of the slab: incidence angle, refractive index, width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams<S> {
    pub theta_deg: S,
    pub n: S,
    pub l_nm: S,
}

impl<S: Scalar> DesignParams<S> {
    pub fn new(theta_deg: S, n: S, l_nm: S) -> Result<Self> {
        let p = Self { theta_deg, n, l_nm };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_angle(self.theta_deg)?;
        check_index(self.n)?;
        if !(self.l_nm > S::zero()) {
            return Err(Error::InvalidParams(format!(
                "width must be positive, got {} nm",
                self.l_nm
            )));
        }
        Ok(())
    }

    /// Reduces the design to the two quantities the transmission depends on.
    pub fn simplified(&self) -> Result<SimplifiedParams<S>> {
        Ok(SimplifiedParams {
            f_coeff: finesse(reflectance_te(self.theta_deg, self.n)?)?,
            delta0_nm: delta0_wavelength(self)?,
        })
    }
}

/// Coefficient of finesse `F` and phase prefactor `delta0` (nm), the only
/// degrees of freedom of `T(lambda)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedParams<S> {
    pub f_coeff: S,
    pub delta0_nm: S,
}

impl<S: Scalar> SimplifiedParams<S> {
    pub fn new(f_coeff: S, delta0_nm: S) -> Result<Self> {
        if !(f_coeff >= S::zero()) || !(delta0_nm > S::zero()) {
            return Err(Error::InvalidParams(format!(
                "need F >= 0 and delta0 > 0, got F={f_coeff}, delta0={delta0_nm}"
            )));
        }
        Ok(Self { f_coeff, delta0_nm })
    }

    /// `T(lambda)` sampled on `grid`.
    pub fn spectrum(&self, grid: &WavelengthGrid) -> Spectrum<S> {
        let half = S::lit(0.5) * self.delta0_nm;
        let values = grid
            .values()
            .map(|lambda| transmission(self.f_coeff, half / S::lit(lambda)))
            .collect();
        Spectrum {
            values,
            grid: Grid::Wavelength(*grid),
        }
    }
}

/// Uniform wavelength sampling, `start_nm + i * step_nm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub step_nm: f64,
    pub count: usize,
}

impl Default for WavelengthGrid {
    fn default() -> Self {
        Self {
            start_nm: 400.0,
            step_nm: 2.0,
            count: 200,
        }
    }
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, step_nm: f64, count: usize) -> Result<Self> {
        if count < 2 || !(step_nm > 0.0) || !(start_nm > 0.0) {
            return Err(Error::InvalidParams(format!(
                "wavelength grid needs count >= 2, step > 0, start > 0 (got {start_nm}, {step_nm}, {count})"
            )));
        }
        Ok(Self {
            start_nm,
            step_nm,
            count,
        })
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start_nm + i as f64 * self.step_nm
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.value(i))
    }

    pub fn end_nm(&self) -> f64 {
        self.value(self.count - 1)
    }
}

/// Uniform angle sampling in degrees; every sample lies strictly inside
/// (-90, 90).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub start_deg: f64,
    pub step_deg: f64,
    pub count: usize,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            start_deg: -89.0,
            step_deg: 1.0,
            count: 179,
        }
    }
}

impl AngleGrid {
    pub fn new(start_deg: f64, step_deg: f64, count: usize) -> Result<Self> {
        let g = Self {
            start_deg,
            step_deg,
            count,
        };
        if count < 2 || !(step_deg > 0.0) || start_deg <= -90.0 || g.value(count - 1) >= 90.0 {
            return Err(Error::InvalidParams(format!(
                "angle grid must lie strictly inside (-90, 90) with count >= 2 (got {start_deg}, {step_deg}, {count})"
            )));
        }
        Ok(g)
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start_deg + i as f64 * self.step_deg
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.value(i))
    }
}

/// Which coordinate a spectrum is sampled over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Wavelength(WavelengthGrid),
    Angle(AngleGrid),
}

impl Grid {
    pub fn count(&self) -> usize {
        match self {
            Grid::Wavelength(g) => g.count,
            Grid::Angle(g) => g.count,
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            Grid::Wavelength(g) => g.value(i),
            Grid::Angle(g) => g.value(i),
        }
    }

    /// Short axis label used in CSV headers and plots.
    pub fn axis(&self) -> &'static str {
        match self {
            Grid::Wavelength(_) => "lambda_nm",
            Grid::Angle(_) => "theta_deg",
        }
    }
}

/// Sampled transmission curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<S> {
    pub values: Vec<S>,
    pub grid: Grid,
}

fn check_angle<S: Scalar>(theta_deg: S) -> Result<()> {
    if !(theta_deg.abs() < S::lit(90.0)) {
        return Err(Error::InvalidParams(format!(
            "incidence angle must satisfy |theta| < 90 deg, got {theta_deg}"
        )));
    }
    Ok(())
}

fn check_index<S: Scalar>(n: S) -> Result<()> {
    if !(n >= S::one()) {
        return Err(Error::InvalidParams(format!("refractive index must be >= 1, got {n}")));
    }
    Ok(())
}

/// Refraction angle inside the slab (radians) from Snell's law with air
/// outside: `n sin(theta_mat) = sin(theta)`.
pub fn snell_angle<S: Scalar>(theta_deg: S, n: S) -> Result<S> {
    check_angle(theta_deg)?;
    check_index(n)?;
    let s = theta_deg.to_radians().sin() / n;
    if s.abs() > S::one() {
        return Err(Error::Domain(format!(
            "no refracted ray: |sin(theta)|/n = {} > 1",
            s.abs()
        )));
    }
    Ok(s.asin())
}

/// TE power reflectance of a single air/slab interface.
pub fn reflectance_te<S: Scalar>(theta_deg: S, n: S) -> Result<S> {
    let theta_mat = snell_angle(theta_deg, n)?;
    let cos_in = theta_deg.to_radians().cos();
    let nc = n * theta_mat.cos();
    let r = (nc - cos_in) / (nc + cos_in);
    Ok(r * r)
}

/// Coefficient of finesse `4R / (1 - R)^2`.
pub fn finesse<S: Scalar>(r: S) -> Result<S> {
    if !(r >= S::zero() && r < S::one()) {
        return Err(Error::Domain(format!("reflectance must lie in [0, 1), got {r}")));
    }
    let q = S::one() - r;
    Ok(S::lit(4.0) * r / (q * q))
}

/// Wavelength-independent phase prefactor `4 pi n l cos(theta_mat)` in nm;
/// the round-trip phase at wavelength `lambda` is `delta0 / lambda`.
pub fn delta0_wavelength<S: Scalar>(p: &DesignParams<S>) -> Result<S> {
    p.validate()?;
    let theta_mat = snell_angle(p.theta_deg, p.n)?;
    Ok(S::lit(4.0) * S::PI() * p.n * p.l_nm * theta_mat.cos())
}

/// Airy transmission `1 / (1 + F sin^2(half_phase))`.
#[inline]
pub fn transmission<S: Scalar>(f_coeff: S, half_phase: S) -> S {
    let s = half_phase.sin();
    S::one() / (S::one() + f_coeff * s * s)
}

/// `T(lambda)` of a design on a wavelength grid.
pub fn spectrum_lambda<S: Scalar>(p: &DesignParams<S>, grid: &WavelengthGrid) -> Result<Spectrum<S>> {
    Ok(p.simplified()?.spectrum(grid))
}

/// `T(theta)` at fixed wavelength, index and width, on an angle grid.
pub fn spectrum_theta<S: Scalar>(lambda_nm: S, n: S, l_nm: S, grid: &AngleGrid) -> Result<Spectrum<S>> {
    if !(lambda_nm > S::zero()) {
        return Err(Error::InvalidParams(format!(
            "wavelength must be positive, got {lambda_nm}"
        )));
    }
    let half0 = S::lit(2.0) * S::PI() * n * l_nm / lambda_nm;
    let values = grid
        .values()
        .map(|theta| {
            let theta = S::lit(theta);
            let f = finesse(reflectance_te(theta, n)?)?;
            let theta_mat = snell_angle(theta, n)?;
            Ok(transmission(f, half0 * theta_mat.cos()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        values,
        grid: Grid::Angle(*grid),
    })
}

/// Intensity of the truncated coherent sum of transmitted partial waves,
/// `|sum_{m < terms} (1 - R) R^m e^{i m delta}|^2`.
///
/// Converges to `transmission(finesse(R), delta / 2)` as `terms` grows; used
/// as an independent check of the closed form.
pub fn partial_wave_oracle<S: Scalar>(r: S, delta: S, terms: usize) -> S {
    let step = Complex::from_polar(r, delta);
    let mut wave = Complex::new(S::one() - r, S::zero());
    let mut sum = Complex::new(S::zero(), S::zero());
    for _ in 0..terms {
        sum += wave;
        wave *= step;
    }
    sum.norm_sqr()
}
