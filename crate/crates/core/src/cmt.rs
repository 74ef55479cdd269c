//! Coupled-mode models of a single Fano slab and of two slabs facing each other.
//!
//! Frequencies and rates are in f₀ units, gaps in λ₀ units. Under the
//! `e^{-iωt}` convention a single slab responds as
//!
//! ```text
//! r(ω) = r_d + d² / (κ − i(ω − ω_F)),   d² = −κ_e (r_d + t_d),   κ = κ_e + κ_i
//! ```
//!
//! with `r_d`, `t_d` the physical background amplitudes of the unpatterned
//! slab. The transmission follows by exchanging `r_d` and `t_d`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fit::{least_squares, rms};
use crate::optics::ScatteringAmplitudes;
use crate::resonance::Parity;
use crate::units::TAU;
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Single-slab resonance plus direct background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoParams {
    pub omega_f: f64,
    pub kappa_e: f64,
    #[serde(default)]
    pub kappa_i: f64,
    pub r_d: Complex64,
    pub t_d: Complex64,
}

impl FanoParams {
    pub fn new(
        omega_f: f64,
        kappa_e: f64,
        kappa_i: f64,
        r_d: Complex64,
        t_d: Complex64,
    ) -> Result<Self> {
        let p = FanoParams {
            omega_f,
            kappa_e,
            kappa_i,
            r_d,
            t_d,
        };
        p.validate()?;
        Ok(p)
    }

    /// Transparent background: only the resonance scatters.
    pub fn flat(omega_f: f64, kappa_e: f64, kappa_i: f64) -> Result<Self> {
        Self::new(
            omega_f,
            kappa_e,
            kappa_i,
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_f > 0.0 && self.omega_f.is_finite()) {
            return Err(Error::invalid("omega_f must be positive"));
        }
        if !(self.kappa_e > 0.0 && self.kappa_e.is_finite()) {
            return Err(Error::invalid("kappa_e must be positive"));
        }
        if !(self.kappa_i >= 0.0 && self.kappa_i.is_finite()) {
            return Err(Error::invalid("kappa_i must be non-negative"));
        }
        let power = self.r_d.norm_sqr() + self.t_d.norm_sqr();
        if !power.is_finite() || power > 1.0 + 1e-10 {
            return Err(Error::invalid("background |r_d|² + |t_d|² exceeds 1"));
        }
        Ok(())
    }

    /// Radiative coupling `d = √(−κ_e (r_d + t_d))` (principal branch; only
    /// `d²` reaches observables).
    pub fn coupling(&self) -> Complex64 {
        (-self.kappa_e * (self.r_d + self.t_d)).sqrt()
    }

    pub fn total_decay(&self) -> f64 {
        self.kappa_e + self.kappa_i
    }

    /// Pole of the response, `ω_F − i(κ_e + κ_i)`.
    pub fn pole(&self) -> Complex64 {
        Complex64::new(self.omega_f, -self.total_decay())
    }

    pub fn with_background(mut self, r_d: Complex64, t_d: Complex64) -> Self {
        self.r_d = r_d;
        self.t_d = t_d;
        self
    }
}

/// Complex `(r, t)` at a (possibly complex) frequency.
pub fn fano_amplitudes(p: &FanoParams, omega: Complex64) -> (Complex64, Complex64) {
    let d2 = -p.kappa_e * (p.r_d + p.t_d);
    let den = p.total_decay() - I * (omega - p.omega_f);
    (p.r_d + d2 / den, p.t_d + d2 / den)
}

/// Symmetric two-port scattering matrix of the slab.
pub fn fano_smatrix(p: &FanoParams, omega: Complex64) -> [[Complex64; 2]; 2] {
    let (r, t) = fano_amplitudes(p, omega);
    [[r, t], [t, r]]
}

pub fn fano_rt(p: &FanoParams, omega: f64) -> ScatteringAmplitudes {
    let (r, t) = fano_amplitudes(p, Complex64::new(omega, 0.0));
    ScatteringAmplitudes::symmetric(r, t)
}

/// Two identical slabs separated by a gap, coupled through their evanescent
/// tails with strength `ζ(q) = C e^{−q/δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleSlabCmt {
    pub fano: FanoParams,
    pub zeta_c: f64,
    pub zeta_delta: f64,
    #[serde(default)]
    pub flat_background: bool,
}

impl DoubleSlabCmt {
    pub fn new(fano: FanoParams, zeta_c: f64, zeta_delta: f64) -> Result<Self> {
        let m = DoubleSlabCmt {
            fano,
            zeta_c,
            zeta_delta,
            flat_background: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_flat_background(mut self, flat: bool) -> Self {
        self.flat_background = flat;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.fano.validate()?;
        if !(self.zeta_delta > 0.0 && self.zeta_delta.is_finite()) {
            return Err(Error::invalid("zeta_delta must be positive"));
        }
        if !self.zeta_c.is_finite() {
            return Err(Error::invalid("zeta_c must be finite"));
        }
        Ok(())
    }

    pub fn zeta(&self, q: f64) -> f64 {
        self.zeta_c * (-q / self.zeta_delta).exp()
    }

    /// Slab parameters actually used, honouring the flat-background toggle.
    pub fn slab(&self) -> FanoParams {
        if self.flat_background {
            self.fano
                .with_background(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
        } else {
            self.fano
        }
    }
}

/// Response of two (possibly different) resonant slabs with direct coupling
/// `zeta`, gap `q`, at a complex frequency. Returns `(r, t)` for incidence on
/// slab 1, referenced to the outer faces.
pub(crate) fn two_resonators(
    p1: &FanoParams,
    p2: &FanoParams,
    zeta: f64,
    omega: Complex64,
    q: f64,
) -> (Complex64, Complex64) {
    let e = (I * TAU * omega * q).exp();
    let (d1, d2) = (p1.coupling(), p2.coupling());
    let den1 = p1.total_decay() - I * (omega - p1.omega_f);
    let den2 = p2.total_decay() - I * (omega - p2.omega_f);
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    // Unknowns [a2, b2, A1, A2]: gap waves leaving slab 1 / slab 2 and mode amplitudes.
    let m = nalgebra::Matrix4::new(
        one,
        -p1.r_d * e,
        -d1,
        z,
        -p2.r_d * e,
        one,
        z,
        -d2,
        z,
        -d1 * e,
        den1,
        -I * zeta,
        -d2 * e,
        z,
        -I * zeta,
        den2,
    );
    let rhs = nalgebra::Vector4::new(p1.t_d, z, d1, z);
    let x = m
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| nalgebra::Vector4::repeat(Complex64::new(f64::NAN, f64::NAN)));
    let (a2, b2, a1m, a2m) = (x[0], x[1], x[2], x[3]);
    let r = p1.r_d + p1.t_d * e * b2 + d1 * a1m;
    let t = p2.t_d * e * a2 + d2 * a2m;
    (r, t)
}

pub fn double_slab_amplitudes(
    m: &DoubleSlabCmt,
    omega: Complex64,
    q: f64,
) -> (Complex64, Complex64) {
    let p = m.slab();
    two_resonators(&p, &p, m.zeta(q), omega, q)
}

pub fn double_slab_response(m: &DoubleSlabCmt, omega: f64, q: f64) -> ScatteringAmplitudes {
    let (r, t) = double_slab_amplitudes(m, Complex64::new(omega, 0.0), q);
    ScatteringAmplitudes::symmetric(r, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supermode {
    pub parity: Parity,
    pub omega: f64,
    pub gamma: f64,
}

/// Closed-form even/odd supermodes in the flat-background picture, with the
/// round-trip phase frozen at the resonance frequency.
pub fn supermodes(m: &DoubleSlabCmt, q: f64) -> (Supermode, Supermode) {
    let p = &m.fano;
    let phase = TAU * p.omega_f * q;
    let (s, c) = phase.sin_cos();
    let split = m.zeta(q) - p.kappa_e * s;
    let even = Supermode {
        parity: Parity::Even,
        omega: p.omega_f - split,
        gamma: p.kappa_e + p.kappa_i + p.kappa_e * c,
    };
    let odd = Supermode {
        parity: Parity::Odd,
        omega: p.omega_f + split,
        gamma: p.kappa_e + p.kappa_i - p.kappa_e * c,
    };
    (even, odd)
}

/// Gaps `q ≤ q_max` at which one supermode loses all radiative decay:
/// integer multiples of half the resonance wavelength.
pub fn bic_locations(m: &DoubleSlabCmt, q_max: f64) -> Vec<f64> {
    let half = 0.5 / m.fano.omega_f;
    (1..)
        .map(|k| k as f64 * half)
        .take_while(|q| *q <= q_max * (1.0 + 1e-12))
        .collect()
}

/// One measured point of a single-slab spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub omega: f64,
    pub reflectance: f64,
    pub transmittance: f64,
}

impl SpectrumSample {
    pub fn new(omega: f64, amps: &ScatteringAmplitudes) -> Self {
        SpectrumSample {
            omega,
            reflectance: amps.reflectance,
            transmittance: amps.transmittance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub omega_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kappa_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kappa_i: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub zeta_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub zeta_delta: Option<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    /// Fano parameters from a single-slab fit on the given background.
    pub fn fano_params(&self, r_d: Complex64, t_d: Complex64) -> Result<FanoParams> {
        match (self.omega_f, self.kappa_e) {
            (Some(w), Some(k)) => FanoParams::new(w, k, self.kappa_i.unwrap_or(0.0), r_d, t_d),
            _ => Err(Error::invalid(
                "report does not hold single-slab parameters",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Also fit κ_i; otherwise it is held at zero.
    pub fit_kappa_i: bool,
    /// In the ζ fit, also refine ω_F and κ_e instead of freezing the
    /// single-slab values.
    pub float_slab: bool,
    pub max_evaluations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fit_kappa_i: false,
            float_slab: false,
            max_evaluations: 200,
        }
    }
}

fn degenerate_check(deviation: &[f64], what: &str) -> Result<()> {
    let peak = deviation.iter().cloned().fold(0.0, f64::max);
    if !(peak > 1e-6) {
        return Err(Error::DegenerateSpectrum(format!(
            "{what} shows no resonant feature (max deviation {peak:.2e})"
        )));
    }
    Ok(())
}

/// Fits `(ω_F, κ_e[, κ_i])` to reflectance and transmittance samples, with the
/// background amplitudes held fixed.
pub fn fit_fano(
    samples: &[SpectrumSample],
    r_d: Complex64,
    t_d: Complex64,
    opts: &FitOptions,
) -> Result<FitReport> {
    if samples.len() < 8 {
        return Err(Error::invalid("Fano fit needs at least 8 samples"));
    }
    let (rb, tb) = (r_d.norm_sqr(), t_d.norm_sqr());
    let dev: Vec<f64> = samples
        .iter()
        .map(|s| (s.transmittance - tb).abs())
        .collect();
    degenerate_check(&dev, "spectrum")?;

    // Initial guess from the extremum of |T − T_bg| and its half width.
    let (imax, peak) = dev.iter().enumerate().fold(
        (0, 0.0),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    );
    let w0 = samples[imax].omega;
    let half = 0.5 * peak;
    let left = samples[..imax]
        .iter()
        .rev()
        .zip(dev[..imax].iter().rev())
        .find(|(_, d)| **d < half)
        .map(|(s, _)| s.omega);
    let right = samples[imax..]
        .iter()
        .zip(&dev[imax..])
        .find(|(_, d)| **d < half)
        .map(|(s, _)| s.omega);
    let span = samples.last().unwrap().omega - samples[0].omega;
    let hw = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (r - l),
        (Some(l), None) => w0 - l,
        (None, Some(r)) => r - w0,
        _ => 0.1 * span.abs(),
    }
    .abs()
    .max(1e-3 * span.abs().max(1e-9));
    let _ = rb;

    let residuals = |x: &[f64]| -> Vec<f64> {
        let (w, ke) = (x[0], x[1].abs());
        let ki = if opts.fit_kappa_i { x[2].abs() } else { 0.0 };
        let p = FanoParams {
            omega_f: w,
            kappa_e: ke,
            kappa_i: ki,
            r_d,
            t_d,
        };
        samples
            .iter()
            .flat_map(|s| {
                let a = fano_rt(&p, s.omega);
                [
                    a.reflectance - s.reflectance,
                    a.transmittance - s.transmittance,
                ]
            })
            .collect()
    };

    let mut best: Option<crate::fit::LsqOutcome> = None;
    for scale in [1.0, 0.5, 2.0, 0.25, 4.0] {
        let mut x0 = vec![w0, hw * scale];
        let mut sc = vec![w0.abs().max(1.0), hw];
        if opts.fit_kappa_i {
            x0.push(0.01 * hw);
            sc.push(hw);
        }
        let out = least_squares(&residuals, &x0, &sc, opts.max_evaluations);
        if best
            .as_ref()
            .map_or(true, |b| out.residual_rms < b.residual_rms)
        {
            best = Some(out);
        }
    }
    let out = best.unwrap();
    let kappa_i = if opts.fit_kappa_i {
        out.params[2].abs()
    } else {
        0.0
    };
    let report = FitReport {
        omega_f: Some(out.params[0]),
        kappa_e: Some(out.params[1].abs()),
        kappa_i: Some(kappa_i),
        zeta_c: None,
        zeta_delta: None,
        residual_rms: out.residual_rms,
        iterations: out.evaluations,
        converged: out.converged,
    };
    // A half width below the sample spacing is not resolved by the data;
    // such a fit is soaking up background mismatch, not a resonance.
    let spacing = samples
        .windows(2)
        .map(|w| (w[1].omega - w[0].omega).abs())
        .fold(f64::INFINITY, f64::min);
    if out.params[1].abs() + kappa_i < spacing {
        return Err(Error::DegenerateSpectrum(format!(
            "fitted half width {:.2e} is below the sample spacing {spacing:.2e}",
            out.params[1].abs() + kappa_i
        )));
    }
    if !out.converged {
        return Err(Error::FitNotConverged {
            iterations: out.evaluations,
            residual_rms: out.residual_rms,
            best: out.params,
        });
    }
    Ok(report)
}

/// RMS reflectance mismatch of a Fano model against samples.
pub fn fano_reflectance_rms(p: &FanoParams, samples: &[SpectrumSample]) -> f64 {
    let r: Vec<f64> = samples
        .iter()
        .map(|s| fano_rt(p, s.omega).reflectance - s.reflectance)
        .collect();
    rms(&r)
}

/// Fits the evanescent coupling `(C, δ)` to a fixed-frequency transmittance
/// slice `(q, T)`, with the slab parameters held fixed.
pub fn fit_zeta(
    m: &DoubleSlabCmt,
    omega: f64,
    slice: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<FitReport> {
    m.fano.validate()?;
    if slice.len() < 8 {
        return Err(Error::invalid("zeta fit needs at least 8 samples"));
    }
    let base = |x: &[f64], q: f64| {
        let mut model = DoubleSlabCmt {
            zeta_c: x[0],
            zeta_delta: x[1].exp(),
            ..*m
        };
        if x.len() == 4 {
            model.fano.omega_f = x[2];
            model.fano.kappa_e = x[3].exp();
        }
        double_slab_response(&model, omega, q).transmittance
    };
    let t_max = slice.iter().map(|s| s.1).fold(0.0, f64::max);
    let t_min = slice.iter().map(|s| s.1).fold(1.0, f64::min);
    degenerate_check(&[t_max - t_min], "slice")?;

    // δ is parametrized by its logarithm to keep it positive.
    // Non-finite model values (runaway parameters) count as a large miss.
    let residuals = |x: &[f64]| -> Vec<f64> {
        slice
            .iter()
            .map(|&(q, t)| {
                let v = base(x, q);
                if v.is_finite() {
                    v - t
                } else {
                    1.0
                }
            })
            .collect()
    };
    let kappa = m.fano.kappa_e;
    // Coarse grid over (C, δ); the best few points seed local refinements.
    let mut starts: Vec<(f64, f64, f64)> = Vec::new();
    for ci in -8..=8 {
        let c = kappa * 10f64.powf(ci as f64 / 2.0).min(1e4) * if ci == 0 { 0.0 } else { 1.0 };
        for &delta in &[0.02, 0.05, 0.1, 0.2, 0.4] {
            for sign in [1.0, -1.0] {
                let x = [sign * c, f64::ln(delta)];
                starts.push((x[0], x[1], rms(&residuals(&x))));
            }
        }
    }
    starts.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut out = crate::fit::LsqOutcome {
        params: vec![starts[0].0, starts[0].1],
        residual_rms: starts[0].2,
        evaluations: 0,
        converged: true,
    };
    if out.residual_rms > 0.0 {
        for &(c0, l0, _) in starts.iter().take(4) {
            let trial = least_squares(&residuals, &[c0, l0], &[kappa, 1.0], opts.max_evaluations);
            if trial.converged && trial.residual_rms <= out.residual_rms {
                out = trial;
            }
        }
        if opts.float_slab {
            let x0 = [out.params[0], out.params[1], m.fano.omega_f, kappa.ln()];
            let floated = least_squares(
                &residuals,
                &x0,
                &[kappa, 1.0, kappa, 1.0],
                opts.max_evaluations,
            );
            if floated.converged && floated.residual_rms < out.residual_rms {
                out = floated;
            }
        }
    }
    let floated = out.params.len() == 4;
    Ok(FitReport {
        omega_f: floated.then(|| out.params[2]),
        kappa_e: floated.then(|| out.params[3].exp()),
        kappa_i: None,
        zeta_c: Some(out.params[0]),
        zeta_delta: Some(out.params[1].exp()),
        residual_rms: out.residual_rms,
        iterations: out.evaluations,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::linspace;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn slab_background() -> (Complex64, Complex64) {
        // Lossless homogeneous slab, phases arbitrary but consistent.
        let stack = crate::stack::LayerStack::new(vec![crate::stack::Layer::new(
            crate::optics::Medium::lossless(2.892).unwrap(),
            0.0645,
        )
        .unwrap()]);
        crate::stack::tmm_amplitudes(&stack, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn on_resonance_swaps_background_magnitudes() {
        let (r_d, t_d) = slab_background();
        let p = FanoParams::new(0.97, 3e-3, 0.0, r_d, t_d).unwrap();
        let a = fano_rt(&p, 0.97);
        assert!((a.r.norm() - t_d.norm()).abs() < 1e-12);
        assert!((a.t.norm() - r_d.norm()).abs() < 1e-12);
    }

    #[test]
    fn transmission_zero_for_real_background_ratio() {
        // In the (r_d, t_d) form with t_d = −i·t_bg the ratio r_d/t_d of a
        // lossless symmetric slab is real and the zero sits at ω_F + (r_d/t_d)κ_e.
        let (r_bg, t_bg) = slab_background();
        let ratio = r_bg / (-I * t_bg);
        assert!(ratio.im.abs() < 1e-12);
        let p = FanoParams::new(0.97, 3e-3, 0.0, r_bg, t_bg).unwrap();
        let a = fano_rt(&p, 0.97 + ratio.re * 3e-3);
        assert!(a.transmittance < 1e-24, "T = {}", a.transmittance);
    }

    #[test]
    fn pole_of_surrogate_is_analytic() {
        let (r_d, t_d) = slab_background();
        let p = FanoParams::new(0.97, 3e-3, 4e-4, r_d, t_d).unwrap();
        let cond = |f: Complex64| -> Result<Complex64> {
            Ok(crate::resonance::inverse_largest_eigenvalue(fano_smatrix(
                &p, f,
            )))
        };
        let m = crate::resonance::find_pole(
            &cond,
            Complex64::new(0.969, 0.001),
            0.0,
            &Default::default(),
        )
        .unwrap();
        assert!((m.pole() - p.pole()).norm() < 1e-10, "{:?}", m.pole());
    }

    #[test]
    fn fit_roundtrip_noiseless() {
        let (r_d, t_d) = slab_background();
        let truth = FanoParams::new(0.97, 3e-3, 0.0, r_d, t_d).unwrap();
        let samples: Vec<_> = linspace(0.95, 0.99, 81)
            .into_iter()
            .map(|w| SpectrumSample::new(w, &fano_rt(&truth, w)))
            .collect();
        let rep = fit_fano(&samples, r_d, t_d, &FitOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.omega_f.unwrap() / 0.97 - 1.0).abs() < 1e-6);
        assert!((rep.kappa_e.unwrap() / 3e-3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fit_with_one_percent_noise_over_many_seeds() {
        let (r_d, t_d) = slab_background();
        let truth = FanoParams::new(0.97, 3e-3, 0.0, r_d, t_d).unwrap();
        let grid = linspace(0.95, 0.99, 81);
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<_> = grid
                .iter()
                .map(|&w| {
                    let a = fano_rt(&truth, w);
                    SpectrumSample {
                        omega: w,
                        reflectance: a.reflectance + 0.01 * rng.gen_range(-1.0..1.0),
                        transmittance: a.transmittance + 0.01 * rng.gen_range(-1.0..1.0),
                    }
                })
                .collect();
            let rep = fit_fano(&samples, r_d, t_d, &FitOptions::default()).unwrap();
            worst = worst
                .max((rep.omega_f.unwrap() / 0.97 - 1.0).abs())
                .max((rep.kappa_e.unwrap() / 3e-3 - 1.0).abs());
        }
        assert!(worst < 0.02, "worst relative error {worst}");
    }

    #[test]
    fn flat_spectrum_is_degenerate() {
        let (r_d, t_d) = slab_background();
        let samples: Vec<_> = linspace(0.9, 1.0, 20)
            .into_iter()
            .map(|w| SpectrumSample {
                omega: w,
                reflectance: r_d.norm_sqr(),
                transmittance: t_d.norm_sqr(),
            })
            .collect();
        assert!(matches!(
            fit_fano(&samples, r_d, t_d, &FitOptions::default()),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn unresolved_linewidth_is_degenerate() {
        // A slow tilt on the background, no resonance: any "fit" would need a
        // half width far below the sample spacing.
        let (r_d, t_d) = slab_background();
        let samples: Vec<_> = linspace(0.98, 1.02, 41)
            .into_iter()
            .map(|w| {
                let tilt = 0.05 * (w - 1.0);
                SpectrumSample {
                    omega: w,
                    reflectance: r_d.norm_sqr() + tilt,
                    transmittance: t_d.norm_sqr() - tilt,
                }
            })
            .collect();
        assert!(matches!(
            fit_fano(&samples, r_d, t_d, &FitOptions::default()),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn flat_background_fp_point_is_transparent() {
        // Exactly at (ω_F, cos k₀q = ±1) the dark supermode is an embedded
        // eigenvalue and the response is singular; along the Fabry-Pérot curve
        // arg(r² e^{2ikq}) = 0 that meets the point, T = 1.
        let p = FanoParams::flat(1.0, 3e-3, 0.0).unwrap();
        let m = DoubleSlabCmt::new(p, 0.0, 0.1)
            .unwrap()
            .with_flat_background(true);
        for order in 1..=3 {
            for dw in [-1e-3, -1e-4, 1e-4, 1e-3] {
                let w = 1.0 + dw;
                let r = fano_rt(&p, w).r;
                let q = (TAU * order as f64 - (r * r).arg()) / (2.0 * TAU * w);
                assert!((q - order as f64 / 2.0).abs() < 0.2);
                let a = double_slab_response(&m, w, q);
                assert!(
                    (a.transmittance - 1.0).abs() < 1e-12,
                    "q={q} T={}",
                    a.transmittance
                );
            }
        }
    }

    #[test]
    fn degenerates_to_single_slab() {
        let (r_d, t_d) = slab_background();
        let p1 = FanoParams::new(0.97, 3e-3, 0.0, r_d, t_d).unwrap();
        let mut p2 = FanoParams::flat(5.0, 1e-300, 0.0).unwrap();
        p2.kappa_e = 0.0;
        for (w, q) in [(0.96, 0.3), (0.97, 0.77), (0.985, 2.0)] {
            let (r, t) = two_resonators(&p1, &p2, 0.0, Complex64::new(w, 0.0), q);
            let (r1, t1) = fano_amplitudes(&p1, Complex64::new(w, 0.0));
            let e = (I * TAU * w * q).exp();
            assert!((r - r1).norm() < 1e-10);
            assert!((t - t1 * e).norm() < 1e-10);
        }
    }

    /// Self-consistent supermode of the flat-background two-resonator
    /// problem: ω = ω_F − iκ ± (−iκ_e e^{i2πωq} − ζ), solved by fixed point.
    fn supermode_oracle(m: &DoubleSlabCmt, q: f64, sign: f64) -> Complex64 {
        let p = &m.fano;
        let mut w = Complex64::new(p.omega_f, 0.0);
        for _ in 0..200 {
            let e = (I * TAU * w * q).exp();
            w = p.omega_f - I * p.total_decay() + sign * (-I * p.kappa_e * e - m.zeta(q));
        }
        w
    }

    #[test]
    fn supermodes_match_selfconsistent_eigenproblem() {
        let p = FanoParams::flat(0.98, 2e-3, 1e-4).unwrap();
        let m = DoubleSlabCmt::new(p, 2e-3, 0.08)
            .unwrap()
            .with_flat_background(true);
        let tol = 10.0 * (p.kappa_e / p.omega_f).powi(2);
        for q in linspace(0.1, 0.6, 26) {
            let (even, odd) = supermodes(&m, q);
            let ze = supermode_oracle(&m, q, 1.0);
            let zo = supermode_oracle(&m, q, -1.0);
            let ce = Complex64::new(even.omega, -even.gamma);
            let co = Complex64::new(odd.omega, -odd.gamma);
            assert!((ce - ze).norm() / p.omega_f < tol, "q={q}");
            assert!((co - zo).norm() / p.omega_f < tol, "q={q}");
        }
    }

    #[test]
    fn supermode_closed_forms() {
        let p = FanoParams::flat(1.0, 2e-3, 1e-4).unwrap();
        let m = DoubleSlabCmt::new(p, 1e-3, 0.1)
            .unwrap()
            .with_flat_background(true);
        let (even, _) = supermodes(&m, 0.5);
        assert!((even.gamma - p.kappa_i).abs() < 1e-15);
        let (even, odd) = supermodes(&m, 1.0);
        assert!((odd.omega - even.omega - 2.0 * m.zeta(1.0)).abs() < 1e-15);
    }

    #[test]
    fn bic_ladder() {
        let m = DoubleSlabCmt::new(FanoParams::flat(1.0, 1e-3, 0.0).unwrap(), 0.0, 0.1).unwrap();
        assert_eq!(bic_locations(&m, 2.2), vec![0.5, 1.0, 1.5, 2.0]);
        let m95 = DoubleSlabCmt::new(FanoParams::flat(0.95, 1e-3, 0.0).unwrap(), 0.0, 0.1).unwrap();
        let q = bic_locations(&m95, 1.0);
        assert_eq!(q.len(), 1);
        assert!((q[0] - 0.526_315_789_473_684_2).abs() < 1e-12);
        assert!(bic_locations(&m95, 0.5).is_empty());
    }

    #[test]
    fn linewidth_closes_at_bic_gap() {
        // Lossless flat-background pair: the narrow transmission feature near
        // the even-mode BIC shrinks as q approaches λ_F/2.
        let p = FanoParams::flat(1.0, 3e-3, 0.0).unwrap();
        let m = DoubleSlabCmt::new(p, 0.0, 0.1)
            .unwrap()
            .with_flat_background(true);
        let widths: Vec<f64> = [0.46, 0.48, 0.495]
            .iter()
            .map(|&q| supermodes(&m, q).0.gamma)
            .collect();
        assert!(widths[0] > widths[1] && widths[1] > widths[2] && widths[2] < 1e-5);
    }

    #[test]
    fn zeta_fit_roundtrip_and_null() {
        let (r_d, t_d) = slab_background();
        let p = FanoParams::new(0.97, 3e-3, 0.0, r_d, t_d).unwrap();
        let truth = DoubleSlabCmt::new(p, 4e-3, 0.09).unwrap();
        let qs = linspace(0.2, 1.2, 120);
        let slice: Vec<_> = qs
            .iter()
            .map(|&q| (q, double_slab_response(&truth, 0.975, q).transmittance))
            .collect();
        let rep = fit_zeta(&truth, 0.975, &slice, &FitOptions::default()).unwrap();
        assert!((rep.zeta_c.unwrap() / 4e-3 - 1.0).abs() < 1e-6, "{rep:?}");
        assert!((rep.zeta_delta.unwrap() / 0.09 - 1.0).abs() < 1e-6);

        let null = DoubleSlabCmt {
            zeta_c: 0.0,
            ..truth
        };
        let slice: Vec<_> = qs
            .iter()
            .map(|&q| (q, double_slab_response(&null, 0.975, q).transmittance))
            .collect();
        let rep = fit_zeta(&truth, 0.975, &slice, &FitOptions::default()).unwrap();
        assert!(rep.zeta_c.unwrap().abs() < 1e-6);
    }

    #[test]
    fn report_json_field_names() {
        let rep = FitReport {
            omega_f: Some(1.0),
            kappa_e: Some(2e-3),
            kappa_i: Some(0.0),
            zeta_c: None,
            zeta_delta: None,
            residual_rms: 0.0,
            iterations: 3,
            converged: true,
        };
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        for k in ["omega_f", "kappa_e", "kappa_i", "residual_rms", "converged"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }

    proptest! {
        #[test]
        fn lossless_models_are_unitary(w in 0.9f64..1.1, q in 0.05f64..2.0, ke in 1e-4f64..1e-2, zc in 0.0f64..5e-3) {
            let (r_d, t_d) = slab_background();
            let p = FanoParams::new(0.98, ke, 0.0, r_d, t_d).unwrap();
            let a = fano_rt(&p, w);
            prop_assert!((a.reflectance + a.transmittance - 1.0).abs() < 1e-12);
            let m = DoubleSlabCmt::new(p, zc, 0.1).unwrap();
            let b = double_slab_response(&m, w, q);
            prop_assert!((b.reflectance + b.transmittance - 1.0).abs() < 1e-12);
        }

        #[test]
        fn coupling_branch_does_not_matter(w in 0.95f64..1.0, q in 0.1f64..1.5) {
            let (r_d, t_d) = slab_background();
            let p = FanoParams::new(0.98, 3e-3, 0.0, r_d, t_d).unwrap();
            let m = DoubleSlabCmt::new(p, 2e-3, 0.1).unwrap();
            let (r1, t1) = double_slab_amplitudes(&m, Complex64::new(w, 0.0), q);
            // Flipping d on both slabs leaves every product d_i d_j unchanged.
            let (r2, t2) = two_resonators_neg(&p, 2e-3 * (-q / 0.1f64).exp(), Complex64::new(w, 0.0), q);
            prop_assert!((r1 - r2).norm() < 1e-12 && (t1 - t2).norm() < 1e-12);
        }

        #[test]
        fn supermode_decay_bounds(q in 0.01f64..3.0, ke in 1e-4f64..1e-2, ki in 0.0f64..1e-3) {
            let p = FanoParams::flat(1.0, ke, ki).unwrap();
            let m = DoubleSlabCmt::new(p, 1e-3, 0.1).unwrap().with_flat_background(true);
            let (e, o) = supermodes(&m, q);
            for s in [e, o] {
                prop_assert!(s.gamma >= ki - 1e-12 && s.gamma <= 2.0 * ke + ki + 1e-12);
            }
        }
    }

    /// Same as [`two_resonators`] for identical slabs but with `d → −d`.
    fn two_resonators_neg(
        p: &FanoParams,
        zeta: f64,
        omega: Complex64,
        q: f64,
    ) -> (Complex64, Complex64) {
        let e = (I * TAU * omega * q).exp();
        let d = -p.coupling();
        let den = p.total_decay() - I * (omega - p.omega_f);
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let m = nalgebra::Matrix4::new(
            one,
            -p.r_d * e,
            -d,
            z,
            -p.r_d * e,
            one,
            z,
            -d,
            z,
            -d * e,
            den,
            -I * zeta,
            -d * e,
            z,
            -I * zeta,
            den,
        );
        let x = m
            .lu()
            .solve(&nalgebra::Vector4::new(p.t_d, z, d, z))
            .unwrap();
        (
            p.r_d + p.t_d * e * x[1] + d * x[2],
            p.t_d * e * x[0] + d * x[3],
        )
    }
}
