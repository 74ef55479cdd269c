//! Physical constants and conversions between normalized and SI units.

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Speed of light in vacuum (m/s).
pub const C_LIGHT: f64 = 299_792_458.0;

pub const TAU: f64 = std::f64::consts::TAU;

/// Reference scales tying normalized quantities to SI.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scale {
    /// Design wavelength λ₀ in metres.
    pub lambda0: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Scale { lambda0: 1550e-9 }
    }
}

impl Scale {
    pub fn new(lambda0: f64) -> Self {
        Scale { lambda0 }
    }

    /// f₀ = c/λ₀ in Hz.
    pub fn f0(&self) -> f64 {
        C_LIGHT / self.lambda0
    }

    pub fn length_to_si(&self, q: f64) -> f64 {
        q * self.lambda0
    }

    pub fn freq_to_si(&self, f: f64) -> f64 {
        f * self.f0()
    }

    /// Factor converting d(f/f₀)/d(q/λ₀) to Hz/m.
    pub fn first_derivative_factor(&self) -> f64 {
        self.f0() / self.lambda0
    }

    /// Factor converting d²(f/f₀)/d(q/λ₀)² to Hz/m².
    pub fn second_derivative_factor(&self) -> f64 {
        self.f0() / (self.lambda0 * self.lambda0)
    }
}

/// Vacuum wavenumber in λ₀⁻¹ units for a normalized frequency.
#[inline]
pub fn wavenumber(freq: f64) -> f64 {
    TAU * freq
}
