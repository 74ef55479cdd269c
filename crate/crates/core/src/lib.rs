//! Simulation of one- and two-slab photonic-crystal "Fano mirror" cavities.
//!
//! Lengths are expressed in units of the design wavelength `λ₀` and
//! frequencies in units of `f₀ = c/λ₀` everywhere inside the crate; SI values
//! appear only in [`optomech`] and at the configuration boundary in [`sweep`].
//! The time dependence is `e^{-iωt}`: absorbing media carry a positive
//! imaginary index and resonance poles sit in the lower half of the complex
//! frequency plane.

pub mod cmt;
pub mod error;
mod fit;
pub mod optics;
pub mod optomech;
pub mod rcwa;
pub mod resonance;
pub mod stack;
pub mod sweep;
pub mod units;

pub use error::{Error, Result};
pub use optics::{FieldProfile, Medium, ScatteringAmplitudes};
