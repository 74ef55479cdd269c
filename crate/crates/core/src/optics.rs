//! Types shared by every solver: media, scattering amplitudes and field profiles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Isotropic, dispersionless medium described by its complex refractive index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub n_re: f64,
    /// Extinction coefficient; positive values absorb.
    #[serde(default)]
    pub n_im: f64,
}

impl Medium {
    pub const VACUUM: Medium = Medium {
        n_re: 1.0,
        n_im: 0.0,
    };

    pub fn new(n_re: f64, n_im: f64) -> Result<Self> {
        if !(n_re > 0.0) || !n_re.is_finite() {
            return Err(Error::invalid(format!(
                "refractive index must be positive, got {n_re}"
            )));
        }
        if !(n_im >= 0.0) || !n_im.is_finite() {
            return Err(Error::invalid(format!(
                "extinction must be non-negative, got {n_im}"
            )));
        }
        Ok(Medium { n_re, n_im })
    }

    pub fn lossless(n_re: f64) -> Result<Self> {
        Self::new(n_re, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.n_re, self.n_im).map(|_| ())
    }

    pub fn index(&self) -> Complex64 {
        Complex64::new(self.n_re, self.n_im)
    }

    pub fn permittivity(&self) -> Complex64 {
        let n = self.index();
        n * n
    }

    pub fn is_lossless(&self) -> bool {
        self.n_im == 0.0
    }
}

impl Default for Medium {
    fn default() -> Self {
        Medium::VACUUM
    }
}

/// Complex reflection/transmission amplitudes and the derived powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringAmplitudes {
    pub r: Complex64,
    pub t: Complex64,
    pub reflectance: f64,
    pub transmittance: f64,
}

impl ScatteringAmplitudes {
    /// Amplitudes between identical ambient and substrate media.
    pub fn symmetric(r: Complex64, t: Complex64) -> Self {
        ScatteringAmplitudes {
            r,
            t,
            reflectance: r.norm_sqr(),
            transmittance: t.norm_sqr(),
        }
    }

    pub fn absorbance(&self) -> f64 {
        1.0 - self.reflectance - self.transmittance
    }
}

/// Complex transverse electric field sampled along the optical axis for unit
/// incident amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub grid: Vec<f64>,
    pub e_field: Vec<Complex64>,
}

impl FieldProfile {
    pub fn intensity(&self) -> Vec<f64> {
        self.e_field.iter().map(|e| e.norm_sqr()).collect()
    }

    /// Largest |E|² among grid points inside `[lo, hi]`.
    pub fn max_intensity_in(&self, lo: f64, hi: f64) -> Option<f64> {
        self.grid
            .iter()
            .zip(&self.e_field)
            .filter(|(z, _)| **z >= lo && **z <= hi)
            .map(|(_, e)| e.norm_sqr())
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

/// Uniform grid of `count` points spanning `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
