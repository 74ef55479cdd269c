//! Complex eigenfrequencies of slabs and cavities, mode tracking, parity and
//! BIC localization.

use std::fmt;

use faer::c64;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fit::least_squares;
use crate::optics::FieldProfile;
use crate::rcwa::{CavitySpec, Polarization, RcwaConfig, RcwaSolver, Structure};
use crate::{Error, Result};

/// Default convergence tolerance on the eigenfrequency, in f₀ units.
pub const POLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Unknown,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::Unknown => "unknown",
        })
    }
}

/// A resonance of the structure.
///
/// `f_c` stores the decay rate as a positive imaginary part; the actual pole of
/// the response under `e^{-iωt}` sits at [`Eigenmode::pole`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenmode {
    pub f_c: Complex64,
    pub q: f64,
    pub parity: Parity,
    pub q_factor: f64,
    /// Size of the last Newton/secant step, in f₀ units.
    pub residual: f64,
    pub iterations: usize,
    /// Set when the frequency comes from a lineshape fit rather than a pole search.
    #[serde(default)]
    pub fit_derived: bool,
}

impl Eigenmode {
    pub fn from_pole(pole: Complex64, q: f64, residual: f64, iterations: usize) -> Self {
        let f_c = pole.conj();
        Eigenmode {
            f_c,
            q,
            parity: Parity::Unknown,
            q_factor: quality_factor(f_c),
            residual,
            iterations,
            fit_derived: false,
        }
    }

    pub fn pole(&self) -> Complex64 {
        self.f_c.conj()
    }

    pub fn decay(&self) -> f64 {
        self.f_c.im
    }
}

/// `Re f / (2 Im f)`; infinite for a bound state.
pub fn quality_factor(f_c: Complex64) -> f64 {
    if f_c.im <= 0.0 {
        f64::INFINITY
    } else {
        f_c.re / (2.0 * f_c.im)
    }
}

/// Analytic function whose zeros are the poles of the response.
pub trait PoleProblem: Sync {
    /// Evaluates the pole condition at a complex frequency (pole convention,
    /// decaying modes have `Im f < 0`).
    fn condition(&self, f: Complex64) -> Result<Complex64>;
}

impl<F> PoleProblem for F
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    fn condition(&self, f: Complex64) -> Result<Complex64> {
        self(f)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PoleOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest allowed step per iteration (f₀ units).
    pub max_step: f64,
    /// Initial secant spacing.
    pub initial_spacing: f64,
    /// Accept only poles with `|Re f − Re guess|` below this.
    pub window: f64,
}

impl Default for PoleOptions {
    fn default() -> Self {
        PoleOptions {
            tolerance: POLE_TOLERANCE,
            max_iterations: 80,
            max_step: 0.01,
            initial_spacing: 1e-4,
            window: 0.05,
        }
    }
}

/// Raw pole search: Muller iteration with step damping. `guess` uses the
/// pole convention. Returns `(pole, last_step, iterations)`.
pub fn muller<P: PoleProblem + ?Sized>(
    problem: &P,
    guess: Complex64,
    opts: &PoleOptions,
) -> Result<(Complex64, f64, usize)> {
    let h = opts.initial_spacing;
    let mut x = [guess - h, guess + h, guess];
    let mut y = [
        problem.condition(x[0])?,
        problem.condition(x[1])?,
        problem.condition(x[2])?,
    ];
    let mut trace = Vec::new();
    for it in 1..=opts.max_iterations {
        let (x0, x1, x2) = (x[0], x[1], x[2]);
        let (y0, y1, y2) = (y[0], y[1], y[2]);
        if y2 == c64::new(0.0, 0.0) {
            return Ok((x2, 0.0, it));
        }
        let q = (x2 - x1) / (x1 - x0);
        let a = q * y2 - q * (1.0 + q) * y1 + q * q * y0;
        let b = (2.0 * q + 1.0) * y2 - (1.0 + q) * (1.0 + q) * y1 + q * q * y0;
        let c = (1.0 + q) * y2;
        let disc = (b * b - 4.0 * a * c).sqrt();
        let den = if (b + disc).norm() >= (b - disc).norm() {
            b + disc
        } else {
            b - disc
        };
        let mut step = if den.norm() > 0.0 && den.is_finite() {
            -(x2 - x1) * 2.0 * c / den
        } else {
            // Degenerate parabola: fall back to secant.
            -y2 * (x2 - x1) / (y2 - y1)
        };
        if !step.is_finite() {
            return Err(Error::PoleSearch(format!(
                "non-finite step at iteration {it}; trace {trace:?}"
            )));
        }
        if step.norm() > opts.max_step {
            step *= opts.max_step / step.norm();
        }
        let x3 = x2 + step;
        trace.push(x3);
        let y3 = problem.condition(x3)?;
        x = [x1, x2, x3];
        y = [y1, y2, y3];
        if step.norm() < opts.tolerance * x3.norm().max(1.0) {
            if (x3.re - guess.re).abs() > opts.window {
                return Err(Error::PoleSearch(format!(
                    "converged to {x3} outside the window around {guess}"
                )));
            }
            return Ok((x3, step.norm(), it));
        }
    }
    let tail: Vec<_> = trace.iter().rev().take(5).collect();
    Err(Error::PoleSearch(format!(
        "no convergence after {} iterations; last iterates {tail:?}",
        opts.max_iterations
    )))
}

/// Pole condition of a two-slab cavity: the round-trip determinant.
pub struct CavityPole {
    pub solver: RcwaSolver,
    pub cavity: CavitySpec,
}

impl PoleProblem for CavityPole {
    fn condition(&self, f: Complex64) -> Result<Complex64> {
        self.solver.round_trip_determinant(&self.cavity, f)
    }
}

/// Pole condition of any structure through its zero-order scattering matrix:
/// the reciprocal of its largest eigenvalue.
pub struct ScatteringPole {
    pub solver: RcwaSolver,
    pub structure: Structure,
}

impl PoleProblem for ScatteringPole {
    fn condition(&self, f: Complex64) -> Result<Complex64> {
        let s = self.solver.scatter(&self.structure, f, false)?.zero_order;
        Ok(inverse_largest_eigenvalue(s))
    }
}

/// `1/λ_max` of a 2×2 matrix; vanishes where the matrix has a pole.
pub fn inverse_largest_eigenvalue(s: [[Complex64; 2]; 2]) -> Complex64 {
    let tr = s[0][0] + s[1][1];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    let big = if l1.norm() >= l2.norm() { l1 } else { l2 };
    1.0 / big
}

/// Searches a pole starting from `guess` (given with `Im ≥ 0` = decay).
pub fn find_pole<P: PoleProblem + ?Sized>(
    problem: &P,
    guess: Complex64,
    q: f64,
    opts: &PoleOptions,
) -> Result<Eigenmode> {
    if guess.im < 0.0 {
        return Err(Error::invalid(
            "eigenfrequency guess must have Im ≥ 0 (decay)",
        ));
    }
    let (pole, step, iterations) = muller(problem, guess.conj(), opts)?;
    Ok(Eigenmode::from_pole(pole, q, step, iterations))
}

/// Real-frequency local minima of `|condition|` on a uniform grid, ordered by
/// depth; useful as pole guesses.
pub fn scan_guesses<P: PoleProblem + ?Sized>(
    problem: &P,
    f_lo: f64,
    f_hi: f64,
    samples: usize,
) -> Result<Vec<f64>> {
    if samples < 3 || !(f_hi > f_lo) {
        return Err(Error::invalid(
            "scan needs at least 3 samples over a non-empty band",
        ));
    }
    let grid = crate::optics::linspace(f_lo, f_hi, samples);
    let vals = grid
        .iter()
        .map(|&f| problem.condition(Complex64::new(f, 0.0)).map(|v| v.norm()))
        .collect::<Result<Vec<_>>>()?;
    let mut minima: Vec<(f64, f64)> = (1..samples - 1)
        .filter(|&i| vals[i] <= vals[i - 1] && vals[i] <= vals[i + 1])
        .map(|i| (grid[i], vals[i]))
        .collect();
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(minima.into_iter().map(|(f, _)| f).collect())
}

/// Fallback when the pole search stalls: fits `t(f) = a + b/(f − p)` to
/// complex transmission samples around the resonance and returns the fitted
/// mode flagged as fit-derived.
pub fn pole_from_lineshape(freqs: &[f64], t: &[Complex64], q: f64) -> Result<Eigenmode> {
    if freqs.len() < 8 || freqs.len() != t.len() {
        return Err(Error::invalid(
            "lineshape fit needs at least 8 matching samples",
        ));
    }
    // For fixed p the model is linear in (a, b); solve that part exactly.
    let linear = |p: Complex64| -> (Complex64, Complex64) {
        let g: Vec<Complex64> = freqs.iter().map(|&f| 1.0 / (f - p)).collect();
        let n = freqs.len() as f64;
        let (sg, sgg) = (
            g.iter().sum::<Complex64>(),
            g.iter().map(|x| x.norm_sqr()).sum::<f64>(),
        );
        let st: Complex64 = t.iter().sum();
        let sgt: Complex64 = g.iter().zip(t).map(|(x, y)| x.conj() * y).sum();
        let det = n * sgg - sg.norm_sqr();
        let b = (n * sgt - sg.conj() * st) / det;
        let a = (st - b * sg) / n;
        (a, b)
    };
    let residuals = |x: &[f64]| -> Vec<f64> {
        let p = Complex64::new(x[0], -x[1].abs());
        let (a, b) = linear(p);
        freqs
            .iter()
            .zip(t)
            .flat_map(|(&f, &y)| {
                let e = a + b / (f - p) - y;
                [e.re, e.im]
            })
            .collect()
    };
    let (imin, _) = t
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (v - t[0]).norm()))
        .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
    let width = (freqs[freqs.len() - 1] - freqs[0]).abs() / 10.0;
    let mut best: Option<crate::fit::LsqOutcome> = None;
    for scale in [1.0, 0.1, 0.01] {
        let out = least_squares(
            &residuals,
            &[freqs[imin], width * scale],
            &[1.0, width * scale],
            400,
        );
        if best
            .as_ref()
            .map_or(true, |b| out.residual_rms < b.residual_rms)
        {
            best = Some(out);
        }
    }
    let out = best.unwrap();
    let mut mode = Eigenmode::from_pole(
        Complex64::new(out.params[0], -out.params[1].abs()),
        q,
        out.residual_rms,
        out.evaluations,
    );
    mode.fit_derived = true;
    Ok(mode)
}

/// Ordered eigenmodes of one branch over a monotone gap grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBranch {
    pub modes: Vec<Eigenmode>,
    /// Reason the branch stops before the end of the requested grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<String>,
}

impl ModeBranch {
    pub fn qs(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.q).collect()
    }

    /// `|Δf_c|` between neighbours.
    pub fn continuity(&self) -> Vec<f64> {
        self.modes
            .windows(2)
            .map(|w| (w[1].f_c - w[0].f_c).norm())
            .collect()
    }

    /// Frequency at `q` by cubic Lagrange interpolation of the four nearest modes.
    pub fn interpolate(&self, q: f64) -> Option<Complex64> {
        let n = self.modes.len();
        if n < 4 {
            return None;
        }
        let i = self.modes.iter().position(|m| m.q >= q)?.max(2).min(n - 2);
        let pts = &self.modes[i - 2..i + 2];
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, pj) in pts.iter().enumerate() {
            let mut w = 1.0;
            for (k, pk) in pts.iter().enumerate() {
                if k != j {
                    w *= (q - pk.q) / (pj.q - pk.q);
                }
            }
            acc += pj.f_c * w;
        }
        Some(acc)
    }

    /// CSV with columns `q/lambda0, re_fc/f0, im_fc/f0, Q, parity, residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q_lambda0,re_fc_f0,im_fc_f0,q_factor,parity,residual\n");
        for m in &self.modes {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.6e}\n",
                m.q, m.f_c.re, m.f_c.im, m.q_factor, m.parity, m.residual
            ));
        }
        out
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Follows one pole across `qs`, starting from `seed` (found at `qs[0]` or
/// near it). `problem_at(q)` builds the pole condition for gap `q`.
///
/// Each grid point uses an extrapolated guess; a step whose frequency change
/// exceeds five times the median step so far is retried with halved gap steps
/// before the branch is truncated.
pub fn track_mode<P, F>(
    problem_at: F,
    qs: &[f64],
    seed: Eigenmode,
    opts: &PoleOptions,
) -> ModeBranch
where
    P: PoleProblem,
    F: Fn(f64) -> Result<P>,
{
    const MAX_HALVINGS: usize = 6;
    let monotone = qs.windows(2).all(|w| w[1] > w[0]) || qs.windows(2).all(|w| w[1] < w[0]);
    if qs.is_empty() || !monotone {
        return ModeBranch {
            modes: Vec::new(),
            truncated: Some("q grid must be non-empty and strictly monotone".into()),
        };
    }
    let solve = |q: f64, guess: Complex64| -> Result<Eigenmode> {
        let p = problem_at(q)?;
        find_pole(&p, Complex64::new(guess.re, guess.im.max(0.0)), q, opts)
    };

    let mut modes: Vec<Eigenmode> = Vec::with_capacity(qs.len());
    // Rates |Δf|/|Δq| of accepted steps, for the jump test.
    let mut rates: Vec<f64> = Vec::new();
    let mut last = seed;
    let mut before: Option<Eigenmode> = None;
    for (idx, &target) in qs.iter().enumerate() {
        if idx == 0 && (seed.q - target).abs() < 1e-15 {
            modes.push(seed);
            continue;
        }
        let mut cur_q = last.q;
        let mut step = target - cur_q;
        let mut halvings = 0;
        loop {
            let q_next = if (target - cur_q).abs() <= step.abs() * (1.0 + 1e-12) {
                target
            } else {
                cur_q + step
            };
            let guess = match before {
                Some(b) if (last.q - b.q).abs() > 0.0 => {
                    last.f_c + (last.f_c - b.f_c) * ((q_next - last.q) / (last.q - b.q))
                }
                _ => last.f_c,
            };
            let threshold = if rates.len() >= 3 {
                5.0 * median(&mut rates.clone()) * (q_next - cur_q).abs() + 1e-9
            } else {
                opts.max_step
            };
            let attempt = solve(q_next, guess).and_then(|m| {
                let jump = (m.f_c - last.f_c).norm();
                if jump > threshold {
                    Err(Error::PoleSearch(format!(
                        "branch jump |Δf| = {jump:.3e} at q = {q_next}"
                    )))
                } else {
                    Ok(m)
                }
            });
            match attempt {
                Ok(m) => {
                    rates.push((m.f_c - last.f_c).norm() / (q_next - cur_q).abs().max(1e-300));
                    before = Some(last);
                    last = m;
                    cur_q = q_next;
                    if q_next == target {
                        modes.push(m);
                        break;
                    }
                }
                Err(e) => {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        return ModeBranch {
                            modes,
                            truncated: Some(format!("stopped before q = {target}: {e}")),
                        };
                    }
                    step *= 0.5;
                }
            }
        }
    }
    ModeBranch {
        modes,
        truncated: None,
    }
}

/// Parity of an axial field about `midplane`, from the normalized correlation
/// of the field with its mirror image. Needs a grid symmetric enough that the
/// mirror image of each point falls inside it.
pub fn classify_parity(field: &FieldProfile, midplane: f64) -> Parity {
    let g = &field.grid;
    if g.len() < 3 {
        return Parity::Unknown;
    }
    let interp = |z: f64| -> Option<Complex64> {
        let j = g
            .windows(2)
            .position(|w| (w[0] <= z && z <= w[1]) || (w[1] <= z && z <= w[0]))?;
        let (z0, z1) = (g[j], g[j + 1]);
        let t = if z1 == z0 { 0.0 } else { (z - z0) / (z1 - z0) };
        Some(field.e_field[j] * (1.0 - t) + field.e_field[j + 1] * t)
    };
    let (mut cross, mut norm) = (Complex64::new(0.0, 0.0), 0.0);
    for (&z, &e) in g.iter().zip(&field.e_field) {
        if let Some(m) = interp(2.0 * midplane - z) {
            cross += e.conj() * m;
            norm += 0.5 * (e.norm_sqr() + m.norm_sqr());
        }
    }
    if norm <= 0.0 {
        return Parity::Unknown;
    }
    let corr = cross.re / norm;
    if corr > 0.5 {
        Parity::Even
    } else if corr < -0.5 {
        Parity::Odd
    } else {
        Parity::Unknown
    }
}

/// Mode profile of a cavity at an eigenmode and its parity label.
pub fn label_cavity_mode(
    solver: &RcwaSolver,
    cavity: &CavitySpec,
    mode: &mut Eigenmode,
    samples: usize,
) -> Result<FieldProfile> {
    let mid = cavity.midplane();
    let half = 0.5 * cavity.total_thickness() + 0.25;
    let grid = crate::optics::linspace(mid - half, mid + half, samples.max(3) | 1);
    let field = solver
        .cavity_mode_field(cavity, mode.pole(), &grid)?
        .profile;
    mode.parity = classify_parity(&field, mid);
    Ok(field)
}

/// Quadratic-law description of a BIC: `Q(q) = coeff² / (q − q0)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicFit {
    pub q0: f64,
    pub coeff: f64,
    pub fit_window: (f64, f64),
    pub residual_rms: f64,
    /// Coefficient of determination of `1/√Q` against `|q − q0|`.
    pub r_squared: f64,
    /// Mode at the refined optimum, when a pole refinement was available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimum: Option<Eigenmode>,
}

/// Line fit `y = a + b x`; returns `(a, b, r², rms)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ssr: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    (a, b, r2, (ssr / n).sqrt())
}

/// Golden-section minimization of `f` over `[lo, hi]`.
pub fn golden_section<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while (hi - lo).abs() > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// Locates the BIC on a branch spanning a Q maximum.
///
/// With `refine`, the optimum is polished by golden section on the decay rate
/// of freshly solved poles; otherwise `q0` is the value that makes `1/√Q`
/// most nearly linear in `|q − q0|`. The quadratic law is then fitted on the
/// `window` modes nearest the optimum on each side (all modes when `None`).
pub fn locate_bic(
    branch: &ModeBranch,
    window: Option<usize>,
    refine: Option<&dyn Fn(f64) -> Result<Eigenmode>>,
    q_tolerance: f64,
) -> Result<BicFit> {
    let modes = &branch.modes;
    let n = modes.len();
    let (imax, _) = modes
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, m)| {
            if m.q_factor > acc.1 {
                (i, m.q_factor)
            } else {
                acc
            }
        });
    if n < 3 || imax == 0 || imax == n - 1 {
        return Err(Error::PoleSearch("branch has no interior Q maximum".into()));
    }
    // The optimum lies between the neighbours of the sampled maximum; the
    // regression estimate may sit slightly outside, so it gets one more sample.
    let (lo, hi) = (
        modes[imax - 1].q.min(modes[imax + 1].q),
        modes[imax - 1].q.max(modes[imax + 1].q),
    );
    let (wide_lo, wide_hi) = {
        let a = modes[imax.saturating_sub(2)].q;
        let b = modes[(imax + 2).min(n - 1)].q;
        (a.min(b), a.max(b))
    };
    let w = window.unwrap_or(n);
    let sel: Vec<&Eigenmode> = modes[imax.saturating_sub(w)..(imax + w + 1).min(n)]
        .iter()
        .filter(|m| m.q_factor.is_finite())
        .collect();

    let fit_at = |q0: f64| {
        let x: Vec<f64> = sel.iter().map(|m| (m.q - q0).abs()).collect();
        let y: Vec<f64> = sel.iter().map(|m| 1.0 / m.q_factor.sqrt()).collect();
        linear_fit(&x, &y)
    };
    let (q0, optimum) = match refine {
        Some(solve) => {
            let mut best: Option<Eigenmode> = None;
            let (q0, _) = golden_section(
                |q| {
                    let m = solve(q)?;
                    if best.map_or(true, |b| m.f_c.im.abs() < b.f_c.im.abs()) {
                        best = Some(m);
                    }
                    Ok(m.f_c.im.abs())
                },
                lo,
                hi,
                q_tolerance,
            )?;
            (best.map_or(q0, |b| b.q), best)
        }
        None => {
            let (q0, _) = golden_section(|q0| Ok(fit_at(q0).3), wide_lo, wide_hi, q_tolerance)?;
            (q0, None)
        }
    };
    let (_, b, r2, rms) = fit_at(q0);
    if !(b > 0.0) {
        return Err(Error::PoleSearch(
            "1/sqrt(Q) does not grow away from the optimum".into(),
        ));
    }
    Ok(BicFit {
        q0,
        coeff: 1.0 / b,
        fit_window: (
            sel[0].q.min(sel[sel.len() - 1].q),
            sel[0].q.max(sel[sel.len() - 1].q),
        ),
        residual_rms: rms,
        r_squared: r2,
        optimum,
    })
}

/// Poles of both mirror classes at one Bloch vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub bloch_k: [f64; 2],
    /// Mode of the x-polarized (mirror-even) class, then the y-polarized one.
    pub modes: Vec<Eigenmode>,
    /// `|Re f_x − Re f_y|` when both were found.
    pub splitting: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Follows the resonance near `guess` along a path of Bloch vectors with
/// `k_y = 0`, for both polarization classes. Failures are recorded per point.
pub fn band_structure(
    cavity: &CavitySpec,
    k_path: &[[f64; 2]],
    cfg: &RcwaConfig,
    guess: Complex64,
    opts: &PoleOptions,
) -> Result<Vec<BandPoint>> {
    if k_path.iter().any(|k| k[1] != 0.0) {
        return Err(Error::invalid(
            "band paths must lie on the k_y = 0 line (Γ to X)",
        ));
    }
    let mut guesses = [guess, guess];
    let mut out = Vec::with_capacity(k_path.len());
    for k in k_path {
        let mut modes = Vec::new();
        let mut errors = Vec::new();
        for (slot, pol) in [Polarization::X, Polarization::Y].into_iter().enumerate() {
            let mut c = *cfg;
            c.bloch_k = *k;
            c.polarization = pol;
            let res = RcwaSolver::new(c).and_then(|solver| {
                let p = CavityPole {
                    solver,
                    cavity: *cavity,
                };
                find_pole(&p, guesses[slot], cavity.gap, opts)
            });
            match res {
                Ok(m) => {
                    guesses[slot] = m.f_c;
                    modes.push(m);
                }
                Err(e) => errors.push(format!("{pol:?}: {e}")),
            }
        }
        let splitting = (modes.len() == 2).then(|| (modes[0].f_c.re - modes[1].f_c.re).abs());
        out.push(BandPoint {
            bloch_k: *k,
            modes,
            splitting,
            error: (!errors.is_empty()).then(|| errors.join("; ")),
        });
    }
    Ok(out)
}

/// Copy of a cavity with all absorption removed, for radiative-only Q.
pub fn lossless(cavity: &CavitySpec) -> CavitySpec {
    let mut c = *cavity;
    c.slab1.slab.n_im = 0.0;
    c.slab2.slab.n_im = 0.0;
    c.slab1.hole.n_im = 0.0;
    c.slab2.hole.n_im = 0.0;
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::linspace;

    fn lorentz_problem(poles: Vec<Complex64>) -> impl Fn(Complex64) -> Result<Complex64> + Sync {
        move |f: Complex64| {
            Ok(
                poles.iter().map(|p| f - p).product::<Complex64>()
                    / (f - Complex64::new(3.0, -0.5)),
            )
        }
    }

    #[test]
    fn muller_finds_simple_roots() {
        let p = lorentz_problem(vec![
            Complex64::new(0.98, -2e-3),
            Complex64::new(1.01, -1e-5),
        ]);
        let m = find_pole(&p, Complex64::new(0.979, 0.0), 0.0, &PoleOptions::default()).unwrap();
        assert!((m.pole() - Complex64::new(0.98, -2e-3)).norm() < 1e-12);
        assert!((m.q_factor - 0.98 / 4e-3).abs() < 1e-6);
        let m = find_pole(
            &p,
            Complex64::new(1.0105, 0.0),
            0.0,
            &PoleOptions::default(),
        )
        .unwrap();
        assert!((m.f_c - Complex64::new(1.01, 1e-5)).norm() < 1e-12);
    }

    #[test]
    fn guess_sign_is_checked() {
        let p = lorentz_problem(vec![Complex64::new(1.0, -1e-3)]);
        assert!(find_pole(&p, Complex64::new(1.0, -1e-3), 0.0, &PoleOptions::default()).is_err());
    }

    #[test]
    fn parity_of_standing_waves() {
        let grid = linspace(-1.0, 1.0, 201);
        let even = FieldProfile {
            grid: grid.clone(),
            e_field: grid
                .iter()
                .map(|z| Complex64::new((TAU_F * z).cos(), 0.0))
                .collect(),
        };
        let odd = FieldProfile {
            grid: grid.clone(),
            e_field: grid
                .iter()
                .map(|z| Complex64::new(0.0, (TAU_F * z).sin()))
                .collect(),
        };
        let mixed = FieldProfile {
            grid: grid.clone(),
            e_field: grid
                .iter()
                .map(|z| Complex64::new((TAU_F * z).cos() + (TAU_F * z).sin(), 0.0))
                .collect(),
        };
        assert_eq!(classify_parity(&even, 0.0), Parity::Even);
        assert_eq!(classify_parity(&odd, 0.0), Parity::Odd);
        assert_eq!(classify_parity(&mixed, 0.0), Parity::Unknown);
    }
    const TAU_F: f64 = 1.3 * std::f64::consts::TAU;

    fn synthetic_branch(q0: f64, c: f64, qs: &[f64]) -> ModeBranch {
        ModeBranch {
            modes: qs
                .iter()
                .map(|&q| {
                    let qf = c * c / (q - q0).powi(2);
                    let f = Complex64::new(1.0, 1.0 / (2.0 * qf));
                    Eigenmode {
                        f_c: f,
                        q,
                        parity: Parity::Even,
                        q_factor: qf,
                        residual: 0.0,
                        iterations: 0,
                        fit_derived: false,
                    }
                })
                .collect(),
            truncated: None,
        }
    }

    #[test]
    fn bic_fit_recovers_synthetic_law() {
        let qs = linspace(0.40, 0.46, 25);
        let b = locate_bic(&synthetic_branch(0.4317, 1.9809, &qs), None, None, 1e-13).unwrap();
        assert!((b.q0 - 0.4317).abs() < 1e-8, "{}", b.q0);
        assert!((b.coeff - 1.9809).abs() < 1e-8 * 1.9809, "{}", b.coeff);
        assert!(b.r_squared > 0.999_999);
    }

    #[test]
    fn bic_fit_needs_interior_maximum() {
        let qs = linspace(0.44, 0.5, 10);
        assert!(locate_bic(&synthetic_branch(0.43, 2.0, &qs), None, None, 1e-10).is_err());
    }

    #[test]
    fn tracking_is_reversible_and_flags_jumps() {
        // Pole moving smoothly with q.
        let make = |q: f64| -> Result<_> {
            let p = Complex64::new(1.0 - 0.3 * (q - 0.4), -(1e-3 + (q - 0.44).powi(2)));
            Ok(move |f: Complex64| -> Result<Complex64> { Ok((f - p) * (f - p - 0.2)) })
        };
        let qs = linspace(0.35, 0.55, 21);
        let seed = find_pole(
            &make(qs[0]).unwrap(),
            Complex64::new(1.0, 0.0),
            qs[0],
            &PoleOptions::default(),
        )
        .unwrap();
        let fwd = track_mode(make, &qs, seed, &PoleOptions::default());
        assert!(fwd.truncated.is_none());
        assert_eq!(fwd.modes.len(), 21);
        let rev_q: Vec<f64> = qs.iter().rev().cloned().collect();
        let rev = track_mode(
            make,
            &rev_q,
            *fwd.modes.last().unwrap(),
            &PoleOptions::default(),
        );
        for (a, b) in fwd.modes.iter().zip(rev.modes.iter().rev()) {
            assert!((a.f_c - b.f_c).norm() < 1e-8);
        }
        // Branch with a discontinuity is truncated, never stitched.
        let broken = |q: f64| -> Result<_> {
            let p = if q < 0.45 {
                Complex64::new(1.0, -1e-3)
            } else {
                Complex64::new(1.004, -1e-3)
            };
            Ok(move |f: Complex64| -> Result<Complex64> { Ok(f - p) })
        };
        let seed = find_pole(
            &broken(qs[0]).unwrap(),
            Complex64::new(1.0, 0.0),
            qs[0],
            &PoleOptions::default(),
        )
        .unwrap();
        let mut opts = PoleOptions::default();
        opts.max_step = 1e-3;
        let b = track_mode(broken, &qs, seed, &opts);
        assert!(b.truncated.is_some());
        assert!(b.modes.iter().all(|m| m.q < 0.45));
    }

    #[test]
    fn lineshape_fallback_recovers_pole() {
        let p = Complex64::new(0.99, -3e-4);
        let freqs = linspace(0.985, 0.995, 41);
        let t: Vec<Complex64> = freqs
            .iter()
            .map(|&f| Complex64::new(0.3, 0.1) + Complex64::new(-2e-4, 1e-4) / (f - p))
            .collect();
        let m = pole_from_lineshape(&freqs, &t, 0.5).unwrap();
        assert!(m.fit_derived);
        assert!((m.pole() - p).norm() < 1e-9, "{:?}", m.pole());
    }

    #[test]
    fn branch_csv_columns() {
        let b = synthetic_branch(0.43, 2.0, &[0.42, 0.44]);
        let csv = b.to_csv();
        assert!(csv.starts_with("q_lambda0,re_fc_f0,im_fc_f0,q_factor,parity,residual\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().contains(",even,"));
    }
}
