//! Optomechanical coupling rates and figures of merit.
//!
//! Rates are stored as angular frequencies (rad/s) and displayed divided by
//! 2π. Couplings obtained from eigenfrequency branches keep the raw sign of
//! `d f_c / d q`; the sign-flipped value `−∂ω/∂x` used in the Hamiltonian
//! convention is reported alongside.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::resonance::ModeBranch;
use crate::units::{Scale, C_LIGHT, HBAR, K_B, TAU};
use crate::{Error, Result};

/// Unit tag carried by every dimensional value crossing the JSON boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Hz,
    RadPerS,
    HzPerM,
    RadPerSPerM,
    HzPerM2,
    RadPerSPerM2,
    M,
    Kg,
    K,
    PerM,
    Dimensionless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexQuantity {
    pub re: f64,
    pub im: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity { value, unit }
    }

    /// Value of a rate in rad/s; rejects anything that is not a frequency.
    pub fn angular_rate(&self) -> Result<f64> {
        match self.unit {
            Unit::Hz => Ok(TAU * self.value),
            Unit::RadPerS => Ok(self.value),
            u => Err(Error::invalid(format!("expected a frequency, got {u:?}"))),
        }
    }

    /// Value of a frequency pull parameter in rad/s per metre.
    pub fn angular_per_m(&self) -> Result<f64> {
        match self.unit {
            Unit::HzPerM => Ok(TAU * self.value),
            Unit::RadPerSPerM => Ok(self.value),
            u => Err(Error::invalid(format!(
                "expected a frequency per length, got {u:?}"
            ))),
        }
    }
}

impl ComplexQuantity {
    pub fn new(z: Complex64, unit: Unit) -> Self {
        ComplexQuantity {
            re: z.re,
            im: z.im,
            unit,
        }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    fn angular(&self, cyclic: Unit, angular: Unit) -> Result<Complex64> {
        if self.unit == cyclic {
            Ok(self.value() * TAU)
        } else if self.unit == angular {
            Ok(self.value())
        } else {
            Err(Error::invalid(format!(
                "expected {cyclic:?} or {angular:?}, got {:?}",
                self.unit
            )))
        }
    }
}

/// Mechanical resonator of the movable mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalSpec {
    /// Angular frequency Ω_m (rad/s).
    pub omega_m: f64,
    /// Effective mass (kg).
    pub m_eff: f64,
    pub q_m: f64,
    /// Bath temperature (K).
    pub temperature: f64,
}

impl MechanicalSpec {
    /// Builds a spec from `Ω_m/2π` in Hz and the mass in kg.
    pub fn from_hz(freq_hz: f64, m_eff: f64, q_m: f64, temperature: f64) -> Result<Self> {
        let spec = MechanicalSpec {
            omega_m: TAU * freq_hz,
            m_eff,
            q_m,
            temperature,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_m", self.omega_m),
            ("m_eff", self.m_eff),
            ("q_m", self.q_m),
            ("temperature", self.temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Thermal phonon occupation `k_B T/ħΩ_m`.
    pub fn n_bath(&self) -> f64 {
        K_B * self.temperature / (HBAR * self.omega_m)
    }
}

/// Zero-point motion `√(ħ/2 m_eff Ω_m)` in metres.
pub fn zero_point_motion(mech: &MechanicalSpec) -> f64 {
    (HBAR / (2.0 * mech.m_eff * mech.omega_m)).sqrt()
}

/// Step control for the finite-difference couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilOptions {
    /// Initial step in λ₀.
    pub h: f64,
    /// Accept when the h and h/2 estimates differ by less than
    /// `rel_tol·|value| + abs_tol` (normalized units).
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Extra halvings tried before the report is flagged non-converged.
    pub max_halvings: usize,
}

impl Default for StencilOptions {
    fn default() -> Self {
        StencilOptions {
            h: 1e-3,
            rel_tol: 1e-2,
            abs_tol: 1e-6,
            max_halvings: 3,
        }
    }
}

impl StencilOptions {
    /// Smaller default step used right at a BIC, where Q varies steeply.
    pub fn near_bic() -> Self {
        StencilOptions {
            h: 1e-4,
            ..Self::default()
        }
    }
}

/// First and (half) second derivatives of a complex eigenfrequency branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// Gap in λ₀.
    pub q: f64,
    /// `d(f_c/f₀)/d(q/λ₀)`; the imaginary part follows the decay rate.
    pub g_norm: ComplexQuantity,
    /// `½ d²(f_c/f₀)/d(q/λ₀)²`.
    pub g2_norm: ComplexQuantity,
    /// `d f_c/dq` in Hz/m, equal to `G/2π` in angular terms.
    pub g: ComplexQuantity,
    /// `½ d² f_c/dq²` in Hz/m².
    pub g2: ComplexQuantity,
    /// `−d f_c/dq`, the Hamiltonian sign convention.
    pub g_flipped: ComplexQuantity,
    pub h_step: Quantity,
    /// Estimated absolute errors of the normalized first and second values.
    pub g_error: f64,
    pub g2_error: f64,
    pub converged: bool,
    pub lambda0: Quantity,
}

fn stencil(f: &[Complex64; 5], h: f64) -> (Complex64, Complex64) {
    let [m2, m1, c, p1, p2] = *f;
    let d1 = (m2 - p2 + (p1 - m1) * 8.0) / (12.0 * h);
    let d2 = (-m2 - p2 + (p1 + m1) * 16.0 - c * 30.0) / (12.0 * h * h);
    (d1, 0.5 * d2)
}

/// Derivatives of `f_c(q)` at `q` by five-point central differences with
/// one Richardson step between `h` and `h/2`, halving further when the two
/// disagree beyond tolerance.
pub fn coupling_at<F>(
    f_c: F,
    q: f64,
    opts: &StencilOptions,
    scale: &Scale,
) -> Result<CouplingReport>
where
    F: Fn(f64) -> Result<Complex64>,
{
    if !(opts.h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let eval = |h: f64| -> Result<(Complex64, Complex64)> {
        let pts = [
            f_c(q - 2.0 * h)?,
            f_c(q - h)?,
            f_c(q)?,
            f_c(q + h)?,
            f_c(q + 2.0 * h)?,
        ];
        Ok(stencil(&pts, h))
    };
    let mut h = opts.h;
    let mut coarse = eval(h)?;
    let mut best = None;
    for _ in 0..=opts.max_halvings {
        let fine = eval(0.5 * h)?;
        let e1 = (fine.0 - coarse.0).norm();
        let e2 = (fine.1 - coarse.1).norm();
        let rich = (
            fine.0 + (fine.0 - coarse.0) / 15.0,
            fine.1 + (fine.1 - coarse.1) / 15.0,
        );
        let ok = e1 <= opts.rel_tol * fine.0.norm() + opts.abs_tol
            && e2 <= opts.rel_tol * fine.1.norm() + opts.abs_tol;
        best = Some((rich, e1 / 15.0, e2 / 15.0, h, ok));
        if ok {
            break;
        }
        h *= 0.5;
        coarse = fine;
    }
    let ((d1, d2), e1, e2, h, ok) = best.expect("loop runs at least once");
    Ok(report_from_derivatives(q, d1, d2, h, e1, e2, ok, scale))
}

/// Derivatives taken from a tracked branch, interpolating between its
/// samples. The branch must cover `[q − 2h, q + 2h]` and be untruncated
/// around that window.
pub fn coupling_derivatives(
    branch: &ModeBranch,
    q: f64,
    opts: &StencilOptions,
    scale: &Scale,
) -> Result<CouplingReport> {
    let qs = branch.qs();
    let (lo, hi) = qs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if q - 2.0 * opts.h < lo || q + 2.0 * opts.h > hi {
        return Err(Error::invalid(format!(
            "branch [{lo}, {hi}] does not cover the stencil around q = {q}"
        )));
    }
    let mut sorted = branch.clone();
    sorted.modes.sort_by(|a, b| a.q.total_cmp(&b.q));
    coupling_at(
        |x| {
            sorted
                .interpolate(x)
                .ok_or_else(|| Error::invalid("branch too short to interpolate"))
        },
        q,
        opts,
        scale,
    )
}

#[allow(clippy::too_many_arguments)]
fn report_from_derivatives(
    q: f64,
    d1: Complex64,
    d2: Complex64,
    h: f64,
    e1: f64,
    e2: f64,
    converged: bool,
    scale: &Scale,
) -> CouplingReport {
    let g_si = d1 * scale.first_derivative_factor();
    CouplingReport {
        q,
        g_norm: ComplexQuantity::new(d1, Unit::Dimensionless),
        g2_norm: ComplexQuantity::new(d2, Unit::Dimensionless),
        g: ComplexQuantity::new(g_si, Unit::HzPerM),
        g2: ComplexQuantity::new(d2 * scale.second_derivative_factor(), Unit::HzPerM2),
        g_flipped: ComplexQuantity::new(-g_si, Unit::HzPerM),
        h_step: Quantity::new(h, Unit::Dimensionless),
        g_error: e1,
        g2_error: e2,
        converged,
        lambda0: Quantity::new(scale.lambda0, Unit::M),
    }
}

/// Single-photon figures of merit. All rates are angular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureOfMerit {
    pub x0: Quantity,
    pub g0: ComplexQuantity,
    pub g2: ComplexQuantity,
    pub kappa: Quantity,
    pub omega_m: Quantity,
    pub g0_over_kappa: f64,
    pub g0_over_omega_m: f64,
    pub kappa_over_omega_m: f64,
    pub n_bath: f64,
    pub cooperativity: f64,
    pub quantum_cooperativity: f64,
}

impl FigureOfMerit {
    /// `g₀/2π` in Hz.
    pub fn g0_hz(&self) -> f64 {
        Complex64::new(self.g0.re, self.g0.im).norm() / TAU
    }

    pub fn kappa_hz(&self) -> f64 {
        self.kappa.value / TAU
    }
}

/// `g₀ = G x₀`, `g₂ = G₂ x₀²`, `C = 4|g₀|²Q_m/(κΩ_m)` and `C_q = C/n_bath`.
///
/// `g` is a frequency pull (Hz/m or rad/s/m), `g2` its second-order
/// counterpart (Hz/m² or rad/s/m²) and `kappa` a rate; any other unit tag is
/// rejected.
pub fn figure_of_merit(
    g: ComplexQuantity,
    g2: Option<ComplexQuantity>,
    kappa: Quantity,
    mech: &MechanicalSpec,
) -> Result<FigureOfMerit> {
    mech.validate()?;
    let g = g.angular(Unit::HzPerM, Unit::RadPerSPerM)?;
    let g2 = match g2 {
        Some(v) => v.angular(Unit::HzPerM2, Unit::RadPerSPerM2)?,
        None => Complex64::new(0.0, 0.0),
    };
    let kappa = kappa.angular_rate()?;
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    let x0 = zero_point_motion(mech);
    let g0 = g * x0;
    let c = 4.0 * g0.norm_sqr() * mech.q_m / (kappa * mech.omega_m);
    let n_bath = mech.n_bath();
    Ok(FigureOfMerit {
        x0: Quantity::new(x0, Unit::M),
        g0: ComplexQuantity::new(g0, Unit::RadPerS),
        g2: ComplexQuantity::new(g2 * x0 * x0, Unit::RadPerS),
        kappa: Quantity::new(kappa, Unit::RadPerS),
        omega_m: Quantity::new(mech.omega_m, Unit::RadPerS),
        g0_over_kappa: g0.norm() / kappa,
        g0_over_omega_m: g0.norm() / mech.omega_m,
        kappa_over_omega_m: kappa / mech.omega_m,
        n_bath,
        cooperativity: c,
        quantum_cooperativity: c / n_bath,
    })
}

/// Conventional end-mirror Fabry-Pérot cavity used as a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpBaselineSpec {
    /// Cavity length (m).
    pub length: f64,
    pub finesse: f64,
    /// Wavelength (m).
    pub wavelength: f64,
    pub mech: MechanicalSpec,
    /// Amplitude reflectivity of a membrane placed in the middle; scales g₀ by `2|r|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mim_reflectivity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpBaseline {
    pub length: Quantity,
    /// `ω_c/L` (rad/s per m).
    pub g: Quantity,
    pub figure: FigureOfMerit,
}

/// `κ = πc/(2LF)`, `G = ω_c/L`, `g₀ = G x₀` (times `2|r|` for a membrane in the middle).
pub fn fp_baseline(spec: &FpBaselineSpec) -> Result<FpBaseline> {
    if !(spec.wavelength > 0.0 && spec.finesse > 0.0) {
        return Err(Error::invalid("wavelength and finesse must be positive"));
    }
    // A relative margin keeps L = λ/2 itself valid despite rounding.
    if !(spec.length >= 0.5 * spec.wavelength * (1.0 - 1e-12)) {
        return Err(Error::invalid(format!(
            "cavity length {} m is below half a wavelength; no resonance is supported",
            spec.length
        )));
    }
    let omega_c = TAU * C_LIGHT / spec.wavelength;
    let kappa = std::f64::consts::PI * C_LIGHT / (2.0 * spec.length * spec.finesse);
    let mut g = omega_c / spec.length;
    if let Some(r) = spec.mim_reflectivity {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid("membrane reflectivity must lie in [0, 1]"));
        }
        g *= 2.0 * r;
    }
    let figure = figure_of_merit(
        ComplexQuantity::new(Complex64::new(g, 0.0), Unit::RadPerSPerM),
        None,
        Quantity::new(kappa, Unit::RadPerS),
        &spec.mech,
    )?;
    Ok(FpBaseline {
        length: Quantity::new(spec.length, Unit::M),
        g: Quantity::new(g, Unit::RadPerSPerM),
        figure,
    })
}

/// Exactly one description of material loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossInput {
    /// Internal decay rate (rad/s) and group velocity (m/s).
    InternalDecay {
        kappa_i: f64,
        v_g: f64,
    },
    /// Absorption coefficient (1/m).
    Alpha(f64),
    ImN(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    /// Absorption coefficient (1/m).
    pub alpha: f64,
    pub im_n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_g: Option<f64>,
    /// Absorption-limited Q `Re n/(2 Im n)`; `None` when unbounded.
    pub q_abs: Option<f64>,
}

impl LossModel {
    /// Fraction of power absorbed in one pass through `thickness` metres.
    pub fn single_pass_absorption(&self, thickness: f64) -> f64 {
        1.0 - (-self.alpha * thickness).exp()
    }
}

/// Completes the chain `α = κ_i/v_g`, `Im n = αλ/4π`, `Q_abs = Re n/(2 Im n)`.
pub fn loss_conversions(input: LossInput, wavelength: f64, n_re: f64) -> Result<LossModel> {
    if !(wavelength > 0.0 && n_re > 0.0) {
        return Err(Error::invalid("wavelength and Re n must be positive"));
    }
    let to_im_n = |alpha: f64| alpha * wavelength / (2.0 * TAU);
    let (alpha, im_n, kappa_i, v_g) = match input {
        LossInput::InternalDecay { kappa_i, v_g } => {
            if !(v_g > 0.0 && kappa_i >= 0.0) {
                return Err(Error::invalid("need kappa_i ≥ 0 and v_g > 0"));
            }
            let alpha = kappa_i / v_g;
            (alpha, to_im_n(alpha), Some(kappa_i), Some(v_g))
        }
        LossInput::Alpha(alpha) => (alpha, to_im_n(alpha), None, None),
        LossInput::ImN(im_n) => (im_n * 2.0 * TAU / wavelength, im_n, None, None),
    };
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("loss must be non-negative"));
    }
    Ok(LossModel {
        alpha,
        im_n,
        kappa_i,
        v_g,
        q_abs: (im_n > 0.0).then(|| n_re / (2.0 * im_n)),
    })
}

/// Far-field half-angle `λ/(π w₀)` of a Gaussian beam with waist `w0`.
pub fn beam_divergence(w0: f64, wavelength: f64) -> Result<f64> {
    if !(w0 > 0.0) {
        return Err(Error::invalid("beam waist must be positive"));
    }
    Ok(wavelength / (std::f64::consts::PI * w0))
}

/// Baseline comparison table, one row per cavity length.
pub fn fp_table_csv(rows: &[FpBaseline]) -> String {
    let mut out = String::from(
        "length_m,kappa_2pi_mhz,g_2pi_ghz_per_nm,g0_2pi_khz,g0_over_kappa,g0_over_omega_m,kappa_over_omega_m,cooperativity,quantum_cooperativity\n",
    );
    for r in rows {
        let f = &r.figure;
        out.push_str(&format!(
            "{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            r.length.value,
            f.kappa_hz() / 1e6,
            r.g.value / TAU / 1e18,
            f.g0_hz() / 1e3,
            f.g0_over_kappa,
            f.g0_over_omega_m,
            f.kappa_over_omega_m,
            f.cooperativity,
            f.quantum_cooperativity
        ));
    }
    out
}

/// One labelled parameter set of the cavity performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomRow {
    pub label: String,
    pub q_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflectance: Option<f64>,
    pub figure: FigureOfMerit,
}

pub fn fom_table_csv(rows: &[FomRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6e}"));
    let mut out = String::from("set,q_m,im_n,reflectance,kappa_2pi_mhz,g0_over_kappa,cooperativity,quantum_cooperativity\n");
    for r in rows {
        let f = &r.figure;
        out.push_str(&format!(
            "{},{:.6e},{},{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            r.label,
            r.q_m,
            opt(r.im_n),
            opt(r.reflectance),
            f.kappa_hz() / 1e6,
            f.g0_over_kappa,
            f.cooperativity,
            f.quantum_cooperativity
        ));
    }
    out
}
