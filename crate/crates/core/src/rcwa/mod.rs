//! Fourier modal (RCWA) solver for slabs patterned with a square lattice of
//! circular holes.
//!
//! Each layer is expanded in `(2M+1)²` plane waves. Layer eigenmodes are
//! converted to scattering matrices referenced to a vacuum basis and composed
//! with the Redheffer star product, so thick gaps and evanescent orders stay
//! well conditioned. Complex frequencies are accepted everywhere, which is
//! what the pole finder in [`crate::resonance`] relies on.

mod basis;
mod fourier;
mod layer;
mod map;
mod smatrix;
mod solver;

pub use basis::{Basis, Symmetry};
pub use fourier::{permittivity_fourier, FourierCoefficients};
pub use map::{AxisDef, MapKind, MapResult};
pub use smatrix::SMatrix;
pub use solver::{rcwa_field_profile, rcwa_scatter, CavityModeField, RcwaOutput, RcwaSolver};

use serde::{Deserialize, Serialize};

use crate::optics::Medium;
use crate::{Error, Result};

/// Upper bound on the half order; `(2M+1)²` plane waves per polarization.
pub const MAX_HALF_ORDER: usize = 12;

/// One slab patterned with a square lattice of circular holes, the hole
/// centred on the unit cell origin. Lengths in λ₀ units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhcSlabSpec {
    pub thickness: f64,
    pub period: f64,
    pub hole_radius: f64,
    pub slab: Medium,
    #[serde(default)]
    pub hole: Medium,
}

impl PhcSlabSpec {
    /// 100 nm GaAs at λ₀ = 1550 nm with the given lattice.
    pub fn gaas(period: f64, hole_radius: f64) -> Self {
        PhcSlabSpec {
            thickness: 100.0 / 1550.0,
            period,
            hole_radius,
            slab: Medium {
                n_re: 3.374,
                n_im: 0.0,
            },
            hole: Medium::VACUUM,
        }
    }

    pub fn with_extinction(mut self, n_im: f64) -> Self {
        self.slab.n_im = n_im;
        self
    }

    /// Area fraction of the hole, `η = πa²/Λ²`.
    pub fn fill_factor(&self) -> f64 {
        std::f64::consts::PI * (self.hole_radius / self.period).powi(2)
    }

    pub fn is_patterned(&self) -> bool {
        self.hole_radius > 0.0 && self.slab != self.hole
    }

    pub fn validate(&self) -> Result<()> {
        self.slab.validate()?;
        self.hole.validate()?;
        if !(self.thickness > 0.0) || !self.thickness.is_finite() {
            return Err(Error::invalid(format!(
                "slab thickness must be positive, got {}",
                self.thickness
            )));
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::invalid(format!(
                "lattice period must be positive, got {}",
                self.period
            )));
        }
        if !(self.hole_radius >= 0.0) || self.hole_radius >= 0.5 * self.period {
            return Err(Error::invalid(format!(
                "hole radius must satisfy 0 <= a < period/2, got a = {}, period = {}",
                self.hole_radius, self.period
            )));
        }
        Ok(())
    }
}

/// Two aligned slabs separated by a vacuum gap (λ₀ units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    pub slab1: PhcSlabSpec,
    pub slab2: PhcSlabSpec,
    pub gap: f64,
}

impl CavitySpec {
    pub fn symmetric(slab: PhcSlabSpec, gap: f64) -> Self {
        CavitySpec {
            slab1: slab,
            slab2: slab,
            gap,
        }
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.slab1.validate()?;
        self.slab2.validate()?;
        if !(self.gap >= 0.0) || !self.gap.is_finite() {
            return Err(Error::invalid(format!(
                "gap must be >= 0, got {}",
                self.gap
            )));
        }
        if self.slab1.period != self.slab2.period {
            return Err(Error::invalid("both slabs must share one lattice period"));
        }
        Ok(())
    }

    /// Position of the mirror plane between the slabs, measured from the
    /// outer face of slab 1.
    pub fn midplane(&self) -> f64 {
        self.slab1.thickness + 0.5 * self.gap
    }

    pub fn total_thickness(&self) -> f64 {
        self.slab1.thickness + self.gap + self.slab2.thickness
    }
}

/// Structures the solver accepts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    Slab(PhcSlabSpec),
    Cavity(CavitySpec),
}

impl Structure {
    pub fn validate(&self) -> Result<()> {
        match self {
            Structure::Slab(s) => s.validate(),
            Structure::Cavity(c) => c.validate(),
        }
    }

    pub fn period(&self) -> f64 {
        match self {
            Structure::Slab(s) => s.period,
            Structure::Cavity(c) => c.slab1.period,
        }
    }

    pub fn is_lossless(&self) -> bool {
        let slab_ok = |s: &PhcSlabSpec| s.slab.is_lossless() && s.hole.is_lossless();
        match self {
            Structure::Slab(s) => slab_ok(s),
            Structure::Cavity(c) => slab_ok(&c.slab1) && slab_ok(&c.slab2),
        }
    }
}

impl From<PhcSlabSpec> for Structure {
    fn from(s: PhcSlabSpec) -> Self {
        Structure::Slab(s)
    }
}

impl From<CavitySpec> for Structure {
    fn from(c: CavitySpec) -> Self {
        Structure::Cavity(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Factorization {
    /// Permittivity convolution matrix used directly for the in-plane field.
    #[default]
    Laurent,
    /// Inverse of the inverse-permittivity convolution matrix for the in-plane field.
    InverseRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    #[default]
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcwaConfig {
    pub half_order: usize,
    #[serde(default)]
    pub factorization: Factorization,
    #[serde(default)]
    pub polarization: Polarization,
    /// In-plane Bloch wavevector in units of 2π/Λ.
    #[serde(default)]
    pub bloch_k: [f64; 2],
    /// Reduce the plane-wave basis with the y → −y mirror when `bloch_k[1] == 0`.
    #[serde(default = "default_true")]
    pub use_symmetry: bool,
}

fn default_true() -> bool {
    true
}

impl Default for RcwaConfig {
    fn default() -> Self {
        RcwaConfig {
            half_order: 4,
            factorization: Factorization::Laurent,
            polarization: Polarization::X,
            bloch_k: [0.0, 0.0],
            use_symmetry: true,
        }
    }
}

impl RcwaConfig {
    pub fn with_order(half_order: usize) -> Self {
        RcwaConfig {
            half_order,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_order > MAX_HALF_ORDER {
            return Err(Error::invalid(format!(
                "half order {} exceeds the cap {MAX_HALF_ORDER}",
                self.half_order
            )));
        }
        if self.bloch_k.iter().any(|k| !k.is_finite() || k.abs() > 0.5) {
            return Err(Error::invalid(
                "bloch_k must lie in the first Brillouin zone (|k| <= 0.5)",
            ));
        }
        Ok(())
    }

    /// Mirror subspace holding the incident polarization, when applicable.
    pub fn symmetry(&self) -> Symmetry {
        if !self.use_symmetry || self.bloch_k[1] != 0.0 {
            return Symmetry::None;
        }
        match self.polarization {
            Polarization::X => Symmetry::MirrorYEven,
            Polarization::Y => Symmetry::MirrorYOdd,
        }
    }
}
