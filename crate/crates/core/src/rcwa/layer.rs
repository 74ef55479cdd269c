//! Eigenmodes of a single layer and its scattering matrix in the vacuum basis.

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::{c64, Mat};
use num_complex::Complex64;

use super::basis::Basis;
use super::fourier::{inverse_permittivity_fourier, permittivity_fourier, FourierCoefficients};
use super::smatrix::SMatrix;
use super::{Factorization, PhcSlabSpec};
use crate::optics::Medium;
use crate::{Error, Result};

/// Eigenvalue shift applied when the mode matrix is defective.
pub const DEGENERACY_SHIFT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Patterned(PhcSlabSpec),
    Homogeneous(Medium),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerDef {
    pub kind: LayerKind,
    pub thickness: f64,
}

impl LayerDef {
    pub fn from_slab(slab: &PhcSlabSpec) -> Self {
        let kind = if slab.is_patterned() {
            LayerKind::Patterned(*slab)
        } else {
            LayerKind::Homogeneous(slab.slab)
        };
        LayerDef {
            kind,
            thickness: slab.thickness,
        }
    }

    pub fn vacuum(thickness: f64) -> Self {
        LayerDef {
            kind: LayerKind::Homogeneous(Medium::VACUUM),
            thickness,
        }
    }

    pub fn is_vacuum(&self) -> bool {
        matches!(self.kind, LayerKind::Homogeneous(m) if m == Medium::VACUUM)
    }
}

/// Layer eigenmodes in reduced coordinates with the quantities needed to
/// rebuild fields inside the layer.
#[derive(Clone)]
pub struct LayerSolution {
    pub def: LayerDef,
    /// Electric-field eigenvectors (columns).
    pub w: Mat<c64>,
    /// Magnetic-field eigenvectors (`Z₀·H`).
    pub v: Mat<c64>,
    /// Normalized longitudinal wavenumbers `kz/k0`.
    pub lam: Vec<Complex64>,
    /// `W⁻¹ + V⁻¹V₀` and `W⁻¹ − V⁻¹V₀`.
    pub a: Mat<c64>,
    pub b: Mat<c64>,
    /// Inverse permittivity convolution matrix (full size), for Ez.
    pub eps_inv: Mat<c64>,
    pub smatrix: SMatrix,
}

fn toeplitz(coeffs: &FourierCoefficients, basis: &Basis) -> Mat<c64> {
    let n = basis.n();
    Mat::from_fn(n, n, |i, j| {
        let (mi, ni) = basis.orders[i];
        let (mj, nj) = basis.orders[j];
        coeffs.get(mi - mj, ni - nj)
    })
}

fn diag_mat(d: &[Complex64]) -> Mat<c64> {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { c64::new(0.0, 0.0) })
}

fn is_finite(m: &Mat<c64>) -> bool {
    m.col_iter()
        .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
}

/// Mode sign: decaying (or forward-propagating) along +z.
fn choose_branch(k0: Complex64, lam2: Complex64) -> Complex64 {
    let lam = lam2.sqrt();
    let kz = k0 * lam;
    let tol = 1e-12 * kz.norm().max(1e-300);
    let flip = if kz.im.abs() > tol {
        kz.im < 0.0
    } else {
        kz.re < 0.0
    };
    if flip {
        -lam
    } else {
        lam
    }
}

impl LayerSolution {
    pub fn new(
        def: LayerDef,
        basis: &Basis,
        factorization: Factorization,
        index: usize,
    ) -> Result<Self> {
        let n = basis.n();
        let kx = &basis.kx;
        let ky = &basis.ky;
        let zero = c64::new(0.0, 0.0);

        let (w, lam, q_red, eps_inv) = match def.kind {
            LayerKind::Homogeneous(medium) => {
                let eps = medium.permittivity();
                let k0 = basis.k0;
                let lam_full: Vec<Complex64> = if def.is_vacuum() {
                    basis.kz_vac.clone()
                } else {
                    (0..n)
                        .map(|i| {
                            let kz2 = eps - kx[i] * kx[i] - ky[i] * ky[i];
                            let l = kz2.sqrt();
                            let flip = if (k0 * k0 * kz2).re > 0.0 {
                                (k0 * l).re < 0.0
                            } else {
                                (k0 * l).im < 0.0
                            };
                            if flip {
                                -l
                            } else {
                                l
                            }
                        })
                        .collect()
                };
                let q = Mat::from_fn(2 * n, 2 * n, |r, c| {
                    let (bi, i) = (r / n, r % n);
                    let (bj, j) = (c / n, c % n);
                    if i != j {
                        return zero;
                    }
                    match (bi, bj) {
                        (0, 0) => -kx[i] * ky[i],
                        (0, 1) => kx[i] * kx[i] - eps,
                        (1, 0) => eps - ky[i] * ky[i],
                        _ => ky[i] * kx[i],
                    }
                });
                let q_red = basis.project_eh(q.as_ref());
                let lam_red = reduce_diagonal(basis, &lam_full);
                let d = lam_red.len();
                let eps_inv = Mat::from_fn(n, n, |i, j| if i == j { 1.0 / eps } else { zero });
                (Mat::<c64>::identity(d, d), lam_red, q_red, eps_inv)
            }
            LayerKind::Patterned(slab) => {
                let eps_c = permittivity_fourier(&slab, basis.half_order)?;
                let e_mat = toeplitz(&eps_c, basis);
                let eps_inv = e_mat.partial_piv_lu().inverse();
                let e_inplane = match factorization {
                    Factorization::Laurent => e_mat,
                    Factorization::InverseRule => {
                        let inv_c = inverse_permittivity_fourier(&slab, basis.half_order);
                        toeplitz(&inv_c, basis).partial_piv_lu().inverse()
                    }
                };
                if !is_finite(&eps_inv) || !is_finite(&e_inplane) {
                    return Err(Error::numerical(
                        Some(index),
                        "singular permittivity matrix",
                    ));
                }
                let p = Mat::from_fn(2 * n, 2 * n, |r, c| {
                    let (bi, i) = (r / n, r % n);
                    let (bj, j) = (c / n, c % n);
                    let e = eps_inv[(i, j)];
                    let delta = if i == j { c64::new(1.0, 0.0) } else { zero };
                    match (bi, bj) {
                        (0, 0) => kx[i] * e * ky[j],
                        (0, 1) => delta - kx[i] * e * kx[j],
                        (1, 0) => ky[i] * e * ky[j] - delta,
                        _ => -ky[i] * e * kx[j],
                    }
                });
                let q = Mat::from_fn(2 * n, 2 * n, |r, c| {
                    let (bi, i) = (r / n, r % n);
                    let (bj, j) = (c / n, c % n);
                    let e = e_inplane[(i, j)];
                    let (kk_x, kk_y, kxy) = if i == j {
                        (kx[i] * kx[i], ky[i] * ky[i], kx[i] * ky[i])
                    } else {
                        (zero, zero, zero)
                    };
                    match (bi, bj) {
                        (0, 0) => -kxy,
                        (0, 1) => kk_x - e,
                        (1, 0) => e - kk_y,
                        _ => kxy,
                    }
                });
                let p_red = basis.project_he(p.as_ref());
                let q_red = basis.project_eh(q.as_ref());
                let omega2 = &p_red * &q_red;
                let (w, lam2) = eigen_with_shift(&omega2, index)?;
                let lam = lam2.iter().map(|&l2| choose_branch(basis.k0, l2)).collect();
                (w, lam, q_red, eps_inv)
            }
        };

        let d = lam.len();
        if lam.iter().any(|l| l.norm() < 1e-12) {
            return Err(Error::numerical(
                Some(index),
                "mode at grazing cutoff (kz = 0)",
            ));
        }
        let inv_lam: Vec<Complex64> = lam.iter().map(|l| 1.0 / l).collect();
        let v = &q_red * &w * diag_mat(&inv_lam);
        let v0 = basis.project_eh(basis.vacuum_h_operator().as_ref());
        let w_inv = w.partial_piv_lu().inverse();
        let v_inv_v0 = v.partial_piv_lu().solve(&v0);
        let a = &w_inv + &v_inv_v0;
        let b = &w_inv - &v_inv_v0;

        let smatrix = if def.is_vacuum() {
            let phases: Vec<c64> = lam
                .iter()
                .map(|l| (c64::i() * basis.k0 * l * def.thickness).exp())
                .collect();
            SMatrix::propagation(&phases)
        } else {
            let x: Vec<c64> = lam
                .iter()
                .map(|l| (c64::i() * basis.k0 * l * def.thickness).exp())
                .collect();
            let a_lu = a.partial_piv_lu();
            let xb = scale_rows(&x, &b);
            let xa = scale_rows(&x, &a);
            let b_ainv_xb = &b * a_lu.solve(&xb); // B A⁻¹ X B
            let b_ainv_xa = &b * a_lu.solve(&xa); // B A⁻¹ X A
            let dmat = &a - scale_rows(&x, &b_ainv_xb);
            let d_lu = dmat.partial_piv_lu();
            let s11 = d_lu.solve(scale_rows(&x, &b_ainv_xa) - &b);
            let s21 = d_lu.solve(scale_rows(&x, &(&a - &b * a_lu.solve(&b))));
            SMatrix {
                s11: s11.clone(),
                s12: s21.clone(),
                s21,
                s22: s11,
            }
        };
        if !smatrix.is_finite() {
            return Err(Error::numerical(
                Some(index),
                "non-finite layer scattering matrix",
            ));
        }
        debug_assert_eq!(smatrix.dim(), d);
        Ok(LayerSolution {
            def,
            w,
            v,
            lam,
            a,
            b,
            eps_inv,
            smatrix,
        })
    }

    /// Reduced (E, Z₀H) transverse coordinates at depth `z` inside the layer
    /// given forward amplitudes at the left face and backward amplitudes at
    /// the right face.
    pub fn fields_at(
        &self,
        basis: &Basis,
        a_plus: &[Complex64],
        b_minus: &[Complex64],
        z: f64,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let d = self.lam.len();
        let i = c64::i();
        let mut fwd = vec![c64::new(0.0, 0.0); d];
        let mut bwd = vec![c64::new(0.0, 0.0); d];
        for k in 0..d {
            let kz = basis.k0 * self.lam[k];
            fwd[k] = a_plus[k] * (i * kz * z).exp();
            bwd[k] = b_minus[k] * (i * kz * (self.def.thickness - z)).exp();
        }
        let mut e = vec![c64::new(0.0, 0.0); d];
        let mut h = vec![c64::new(0.0, 0.0); d];
        for r in 0..d {
            for k in 0..d {
                e[r] += self.w[(r, k)] * (fwd[k] + bwd[k]);
                h[r] += self.v[(r, k)] * (fwd[k] - bwd[k]);
            }
        }
        (e, h)
    }
}

fn scale_rows(x: &[c64], m: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| x[i] * m[(i, j)])
}

/// Diagonal entries of a reduced diagonal operator whose full diagonal is
/// mirror symmetric.
fn reduce_diagonal(basis: &Basis, full: &[Complex64]) -> Vec<Complex64> {
    let n = basis.n();
    let mut doubled = Vec::with_capacity(2 * n);
    doubled.extend_from_slice(full);
    doubled.extend_from_slice(full);
    let m = basis.project(diag_mat(&doubled).as_ref());
    (0..m.nrows()).map(|i| m[(i, i)]).collect()
}

fn eigen_with_shift(m: &Mat<c64>, index: usize) -> Result<(Mat<c64>, Vec<Complex64>)> {
    let attempt = |m: &Mat<c64>| -> Option<(Mat<c64>, Vec<Complex64>)> {
        let evd = m.eigen().ok()?;
        let w = evd.U().to_owned();
        let s: Vec<Complex64> = (0..w.ncols()).map(|k| evd.S()[k]).collect();
        if !is_finite(&w) || s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return None;
        }
        // Reject numerically defective bases.
        let winv = w.partial_piv_lu().inverse();
        if !is_finite(&winv) {
            return None;
        }
        let cond = norm_max(&w) * norm_max(&winv) * w.nrows() as f64;
        (cond < 1e12).then_some((w, s))
    };
    if let Some(r) = attempt(m) {
        return Ok(r);
    }
    let d = m.nrows();
    let shifted = Mat::from_fn(d, d, |i, j| {
        let bump = if i == j {
            DEGENERACY_SHIFT * (1.0 + i as f64 / d as f64)
        } else {
            0.0
        };
        m[(i, j)] + bump
    });
    attempt(&shifted)
        .ok_or_else(|| Error::numerical(Some(index), "layer eigendecomposition failed"))
}

fn norm_max(m: &Mat<c64>) -> f64 {
    m.col_iter()
        .flat_map(|c| c.iter().map(|z| z.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}
