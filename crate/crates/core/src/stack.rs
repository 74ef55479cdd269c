//! Exact normal-incidence optics of homogeneous layer stacks.
//!
//! The stack is described by interface and propagation matrices acting on
//! forward/backward amplitude pairs. Reflection is referenced to the first
//! interface and transmission to the last one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::optics::{FieldProfile, Medium, ScatteringAmplitudes};
use crate::rcwa::{CavitySpec, PhcSlabSpec};
use crate::units::TAU;
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub medium: Medium,
    /// Thickness in λ₀ units.
    pub thickness: f64,
}

impl Layer {
    pub fn new(medium: Medium, thickness: f64) -> Result<Self> {
        medium.validate()?;
        if !(thickness >= 0.0) || !thickness.is_finite() {
            return Err(Error::invalid(format!(
                "layer thickness must be >= 0, got {thickness}"
            )));
        }
        Ok(Layer { medium, thickness })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub ambient: Medium,
    #[serde(default)]
    pub substrate: Medium,
}

impl Default for LayerStack {
    fn default() -> Self {
        LayerStack {
            layers: Vec::new(),
            ambient: Medium::VACUUM,
            substrate: Medium::VACUUM,
        }
    }
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Self {
        LayerStack {
            layers,
            ..Default::default()
        }
    }

    pub fn with_layer(mut self, medium: Medium, thickness: f64) -> Result<Self> {
        self.layers.push(Layer::new(medium, thickness)?);
        Ok(self)
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    /// The same stack seen from the substrate side.
    pub fn reversed(&self) -> Self {
        LayerStack {
            layers: self.layers.iter().rev().copied().collect(),
            ambient: self.substrate,
            substrate: self.ambient,
        }
    }

    /// Concatenation `self` followed by `other`; ambient of `self`, substrate of `other`.
    pub fn then(&self, other: &LayerStack) -> Self {
        let mut layers = self.layers.clone();
        layers.extend_from_slice(&other.layers);
        LayerStack {
            layers,
            ambient: self.ambient,
            substrate: other.substrate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ambient.validate()?;
        self.substrate.validate()?;
        for l in &self.layers {
            Layer::new(l.medium, l.thickness)?;
        }
        Ok(())
    }

    fn indices(&self) -> Vec<Complex64> {
        let mut n = Vec::with_capacity(self.layers.len() + 2);
        n.push(self.ambient.index());
        n.extend(self.layers.iter().map(|l| l.medium.index()));
        n.push(self.substrate.index());
        n
    }
}

type M2 = [[Complex64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Maps amplitudes just right of an interface to amplitudes just left of it.
fn interface(n_left: Complex64, n_right: Complex64) -> M2 {
    let r = (n_left - n_right) / (n_left + n_right);
    let t = 2.0 * n_left / (n_left + n_right);
    [[1.0 / t, r / t], [r / t, 1.0 / t]]
}

/// Maps amplitudes at the right edge of a layer to its left edge.
fn propagation(phase: Complex64) -> M2 {
    let z = Complex64::new(0.0, 0.0);
    [[(-I * phase).exp(), z], [z, (I * phase).exp()]]
}

fn check_freq(freq: Complex64) -> Result<()> {
    if !(freq.re > 0.0) || !freq.im.is_finite() {
        return Err(Error::invalid(format!(
            "frequency must have positive real part, got {freq}"
        )));
    }
    Ok(())
}

/// Complex reflection and transmission amplitudes for incidence from the
/// ambient side; accepts complex frequencies for pole searches.
pub fn tmm_amplitudes(stack: &LayerStack, freq: Complex64) -> Result<(Complex64, Complex64)> {
    check_freq(freq)?;
    let k0 = TAU * freq;
    let n = stack.indices();
    let mut m = interface(n[0], n[1]);
    for (j, layer) in stack.layers.iter().enumerate() {
        let phase = k0 * n[j + 1] * layer.thickness;
        m = mul(&m, &propagation(phase));
        m = mul(&m, &interface(n[j + 1], n[j + 2]));
    }
    Ok((m[1][0] / m[0][0], 1.0 / m[0][0]))
}

pub fn tmm_scatter(stack: &LayerStack, freq: f64) -> Result<ScatteringAmplitudes> {
    let (r, t) = tmm_amplitudes(stack, Complex64::new(freq, 0.0))?;
    let na = stack.ambient.index();
    let ns = stack.substrate.index();
    Ok(ScatteringAmplitudes {
        r,
        t,
        reflectance: r.norm_sqr(),
        transmittance: t.norm_sqr() * ns.re / na.re,
    })
}

/// Transverse field along the axis for unit incidence from the ambient side.
/// `z = 0` is the first interface; the ambient occupies `z < 0` and the
/// substrate starts at the total stack thickness.
pub fn tmm_field_profile(stack: &LayerStack, freq: f64, grid: &[f64]) -> Result<FieldProfile> {
    if grid.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("field grid contains non-finite positions"));
    }
    check_freq(Complex64::new(freq, 0.0))?;
    let k0 = TAU * freq;
    let n = stack.indices();
    let nl = stack.layers.len();

    // Region j: 0 = ambient, 1..=nl layers, nl+1 substrate. Amplitudes are
    // referenced to the left edge of each region (ambient: z = 0).
    let mut starts = Vec::with_capacity(nl + 2);
    starts.push(0.0);
    let mut z = 0.0;
    for l in &stack.layers {
        starts.push(z);
        z += l.thickness;
    }
    starts.push(z);

    let (_, t) = tmm_amplitudes(stack, Complex64::new(freq, 0.0))?;
    let mut amps = vec![[Complex64::new(0.0, 0.0); 2]; nl + 2];
    amps[nl + 1] = [t, Complex64::new(0.0, 0.0)];
    for j in (0..=nl).rev() {
        let m = interface(n[j], n[j + 1]);
        let right = amps[j + 1];
        let edge = [
            m[0][0] * right[0] + m[0][1] * right[1],
            m[1][0] * right[0] + m[1][1] * right[1],
        ];
        amps[j] = if j == 0 {
            edge
        } else {
            let phase = k0 * n[j] * stack.layers[j - 1].thickness;
            [edge[0] * (-I * phase).exp(), edge[1] * (I * phase).exp()]
        };
    }

    let e_field = grid
        .iter()
        .map(|&zp| {
            let region = if zp < 0.0 {
                0
            } else {
                // Last region whose left edge is <= zp.
                (1..=nl + 1).rev().find(|&j| starts[j] <= zp).unwrap_or(1)
            };
            let k = k0 * n[region];
            let dz = zp - starts[region];
            amps[region][0] * (I * k * dz).exp() + amps[region][1] * (-I * k * dz).exp()
        })
        .collect();
    Ok(FieldProfile {
        grid: grid.to_vec(),
        e_field,
    })
}

/// Effective index of a patterned slab: `(1 − η)·n + η`, `η = πa²/Λ²`.
pub fn effective_index(phc: &PhcSlabSpec) -> Result<f64> {
    phc.validate()?;
    let eta = phc.fill_factor();
    Ok((1.0 - eta) * phc.slab.n_re + eta * phc.hole.n_re)
}

/// Homogeneous layer standing in for a patterned slab (lossless, as the
/// effective-index model carries no extinction).
pub fn effective_layer(phc: &PhcSlabSpec) -> Result<Layer> {
    Layer::new(Medium::lossless(effective_index(phc)?)?, phc.thickness)
}

/// Homogeneous two-slab stack with the cavity's effective indices.
pub fn effective_cavity(cavity: &CavitySpec) -> Result<LayerStack> {
    Ok(LayerStack::new(vec![
        effective_layer(&cavity.slab1)?,
        Layer::new(Medium::VACUUM, cavity.gap)?,
        effective_layer(&cavity.slab2)?,
    ]))
}
