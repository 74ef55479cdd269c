use faer::prelude::*;
use faer::{c64, Mat};
use num_complex::Complex64;

use super::basis::Basis;
use super::fourier::material_indicator;
use super::layer::{LayerDef, LayerKind, LayerSolution};
use super::smatrix::SMatrix;
use super::{CavitySpec, RcwaConfig, Structure};
use crate::optics::{FieldProfile, ScatteringAmplitudes};
use crate::{Error, Result};

/// Result of one RCWA evaluation.
#[derive(Debug, Clone)]
pub struct RcwaOutput {
    pub amplitudes: ScatteringAmplitudes,
    /// Zero-order two-port matrix `[[r, t'], [t, r']]` for the configured polarization.
    pub zero_order: [[Complex64; 2]; 2],
    /// Full scattering matrix in reduced coordinates, when requested.
    pub smatrix: Option<SMatrix>,
}

/// Mode field of a cavity at a complex eigenfrequency.
#[derive(Debug, Clone)]
pub struct CavityModeField {
    /// Ex at the unit-cell centre, normalized to unit peak magnitude.
    pub profile: FieldProfile,
    /// ∫ Re(ε)|E|² over the unit cell and the integration window.
    pub energy_total: f64,
    /// The part of `energy_total` stored in slab material (holes excluded).
    pub energy_in_slab_material: f64,
}

impl CavityModeField {
    pub fn material_fraction(&self) -> f64 {
        self.energy_in_slab_material / self.energy_total
    }
}

/// Immutable solver; per-call scratch lives on the stack of each call.
#[derive(Debug, Clone, Copy)]
pub struct RcwaSolver {
    pub cfg: RcwaConfig,
}

fn cvec_is_finite(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn matvec(m: &Mat<c64>, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![c64::new(0.0, 0.0); m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        if vj == c64::new(0.0, 0.0) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * vj;
        }
    }
    out
}

fn add(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

impl RcwaSolver {
    pub fn new(cfg: RcwaConfig) -> Result<Self> {
        cfg.validate()?;
        // Dense kernels stay single threaded; sweeps parallelize over points.
        faer::set_global_parallelism(faer::Par::Seq);
        Ok(RcwaSolver { cfg })
    }

    pub fn basis(&self, structure: &Structure, freq: Complex64) -> Basis {
        Basis::new(structure.period(), freq, &self.cfg)
    }

    fn layer_defs(structure: &Structure) -> Vec<LayerDef> {
        match structure {
            Structure::Slab(s) => vec![LayerDef::from_slab(s)],
            Structure::Cavity(c) => vec![
                LayerDef::from_slab(&c.slab1),
                LayerDef::vacuum(c.gap),
                LayerDef::from_slab(&c.slab2),
            ],
        }
    }

    fn check_freq(freq: Complex64) -> Result<()> {
        if !(freq.re > 0.0) || !freq.im.is_finite() {
            return Err(Error::invalid(format!(
                "frequency must have positive real part, got {freq}"
            )));
        }
        Ok(())
    }

    /// Eigenmodes and scattering matrices of every layer; identical layers are
    /// solved once.
    pub(crate) fn solve_layers(
        &self,
        structure: &Structure,
        freq: Complex64,
    ) -> Result<(Basis, Vec<LayerSolution>)> {
        structure.validate()?;
        Self::check_freq(freq)?;
        let basis = self.basis(structure, freq);
        let defs = Self::layer_defs(structure);
        let mut sols: Vec<LayerSolution> = Vec::with_capacity(defs.len());
        for (i, def) in defs.iter().enumerate() {
            if let Some(prev) = sols.iter().find(|s| s.def == *def) {
                sols.push(prev.clone());
                continue;
            }
            sols.push(LayerSolution::new(*def, &basis, self.cfg.factorization, i)?);
        }
        Ok((basis, sols))
    }

    pub fn smatrix(&self, structure: &Structure, freq: Complex64) -> Result<(Basis, SMatrix)> {
        let (basis, sols) = self.solve_layers(structure, freq)?;
        let mut total = SMatrix::identity(basis.dim());
        for s in &sols {
            total = total.star(&s.smatrix)?;
        }
        Ok((basis, total))
    }

    fn input_column(&self, basis: &Basis) -> Result<usize> {
        basis.input_column(self.cfg.polarization).ok_or_else(|| {
            Error::invalid("incident polarization not represented in the reduced basis")
        })
    }

    pub fn scatter(
        &self,
        structure: &Structure,
        freq: Complex64,
        keep_smatrix: bool,
    ) -> Result<RcwaOutput> {
        let (basis, s) = self.smatrix(structure, freq)?;
        let c = self.input_column(&basis)?;
        let zero_order = [
            [s.s11[(c, c)], s.s12[(c, c)]],
            [s.s21[(c, c)], s.s22[(c, c)]],
        ];
        let (r, t) = (zero_order[0][0], zero_order[1][0]);
        let amplitudes = if freq.im == 0.0 {
            let mut e_in = vec![c64::new(0.0, 0.0); basis.dim()];
            e_in[c] = c64::new(1.0, 0.0);
            let incident = basis.flux(&basis.lift(&e_in));
            let col = |m: &Mat<c64>| (0..basis.dim()).map(|i| m[(i, c)]).collect::<Vec<_>>();
            ScatteringAmplitudes {
                r,
                t,
                reflectance: basis.flux(&basis.lift(&col(&s.s11))) / incident,
                transmittance: basis.flux(&basis.lift(&col(&s.s21))) / incident,
            }
        } else {
            ScatteringAmplitudes::symmetric(r, t)
        };
        Ok(RcwaOutput {
            amplitudes,
            zero_order,
            smatrix: keep_smatrix.then_some(s),
        })
    }

    /// Vacuum amplitudes `(c+, c−)` on every layer boundary for unit
    /// zero-order incidence from the left.
    fn boundary_amplitudes(
        &self,
        basis: &Basis,
        sols: &[LayerSolution],
    ) -> Result<Vec<(Vec<Complex64>, Vec<Complex64>)>> {
        let d = basis.dim();
        let c = self.input_column(basis)?;
        let mut a_in = vec![c64::new(0.0, 0.0); d];
        a_in[c] = c64::new(1.0, 0.0);

        let l = sols.len();
        let mut left = vec![SMatrix::identity(d)];
        for s in sols {
            let next = left.last().unwrap().star(&s.smatrix)?;
            left.push(next);
        }
        let mut right = vec![SMatrix::identity(d); l + 1];
        for j in (0..l).rev() {
            right[j] = sols[j].smatrix.star(&right[j + 1])?;
        }
        let eye = Mat::<c64>::identity(d, d);
        let mut out = Vec::with_capacity(l + 1);
        for j in 0..=l {
            let m = &eye - &left[j].s22 * &right[j].s11;
            let rhs = matvec(&left[j].s21, &a_in);
            let rhs_m = Mat::from_fn(d, 1, |i, _| rhs[i]);
            let cp_m = m.partial_piv_lu().solve(&rhs_m);
            let cp: Vec<Complex64> = (0..d).map(|i| cp_m[(i, 0)]).collect();
            let cm = matvec(&right[j].s11, &cp);
            if !cvec_is_finite(&cp) || !cvec_is_finite(&cm) {
                return Err(Error::numerical(
                    Some(j),
                    "singular boundary amplitude system",
                ));
            }
            out.push((cp, cm));
        }
        Ok(out)
    }

    /// Axial profile of the co-polarized field at the unit-cell centre for
    /// unit incidence from the left; `z = 0` is the outer face of the first layer.
    pub fn field_profile(
        &self,
        structure: &Structure,
        freq: f64,
        grid: &[f64],
    ) -> Result<FieldProfile> {
        if grid.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("field grid contains non-finite positions"));
        }
        let f = Complex64::new(freq, 0.0);
        let (basis, sols) = self.solve_layers(structure, f)?;
        let bounds = self.boundary_amplitudes(&basis, &sols)?;
        let amps = internal_amplitudes(&sols, &bounds);
        let comp = match self.cfg.polarization {
            super::Polarization::X => 0,
            super::Polarization::Y => basis.n(),
        };
        let e_field = grid
            .iter()
            .map(|&z| {
                let e = reduced_field_at(&basis, &sols, &bounds, &amps, z).0;
                let full = basis.lift(&e);
                full[comp..comp + basis.n()].iter().sum()
            })
            .collect();
        Ok(FieldProfile {
            grid: grid.to_vec(),
            e_field,
        })
    }

    /// Cavity round-trip operator `S22(slab1)·X·S11(slab2)·X` at the inner face
    /// of slab 1, where `X` is free propagation across the gap.
    pub fn round_trip(
        &self,
        cavity: &CavitySpec,
        freq: Complex64,
    ) -> Result<(Basis, Mat<c64>, Vec<LayerSolution>)> {
        let structure = Structure::Cavity(*cavity);
        let (basis, sols) = self.solve_layers(&structure, freq)?;
        let gap = &sols[1].smatrix.s21;
        let m = &sols[0].smatrix.s22 * gap * &sols[2].smatrix.s11 * gap;
        Ok((basis, m, sols))
    }

    /// `det(I − round trip)`: vanishes exactly at the cavity eigenfrequencies.
    pub fn round_trip_determinant(
        &self,
        cavity: &CavitySpec,
        freq: Complex64,
    ) -> Result<Complex64> {
        let (_, m, _) = self.round_trip(cavity, freq)?;
        let d = m.nrows();
        let eye = Mat::<c64>::identity(d, d);
        let det = (&eye - &m).determinant();
        if !det.re.is_finite() || !det.im.is_finite() {
            return Err(Error::numerical(None, "non-finite round-trip determinant"));
        }
        Ok(det)
    }

    /// Field of the cavity eigenmode at (or near) a pole `freq`.
    pub fn cavity_mode_field(
        &self,
        cavity: &CavitySpec,
        freq: Complex64,
        grid: &[f64],
    ) -> Result<CavityModeField> {
        let (basis, m, sols) = self.round_trip(cavity, freq)?;
        let d = basis.dim();
        let evd = m
            .eigen()
            .map_err(|_| Error::numerical(None, "round-trip eigendecomposition failed"))?;
        let k = (0..d)
            .min_by(|&a, &b| {
                let da = (evd.S()[a] - 1.0).norm();
                let db = (evd.S()[b] - 1.0).norm();
                da.total_cmp(&db)
            })
            .ok_or_else(|| Error::numerical(None, "empty round-trip operator"))?;
        let u: Vec<Complex64> = (0..d).map(|i| evd.U()[(i, k)]).collect();

        // u: waves leaving slab 1 into the gap. Build boundary amplitudes for
        // the source-free configuration.
        let gap_ph: Vec<Complex64> = (0..d).map(|i| sols[1].smatrix.s21[(i, i)]).collect();
        let into_slab2: Vec<Complex64> = u.iter().zip(&gap_ph).map(|(a, p)| a * p).collect();
        let refl2 = matvec(&sols[2].smatrix.s11, &into_slab2);
        let into_slab1: Vec<Complex64> = refl2.iter().zip(&gap_ph).map(|(a, p)| a * p).collect();
        let zero = vec![c64::new(0.0, 0.0); d];
        let bounds = vec![
            (zero.clone(), matvec(&sols[0].smatrix.s12, &into_slab1)),
            (
                u.clone(),
                refl2.iter().zip(&gap_ph).map(|(a, p)| a * p).collect(),
            ),
            (into_slab2.clone(), refl2.clone()),
            (matvec(&sols[2].smatrix.s21, &into_slab2), zero),
        ];
        let amps = internal_amplitudes(&sols, &bounds);

        let n = basis.n();
        let comp = match self.cfg.polarization {
            super::Polarization::X => 0,
            super::Polarization::Y => n,
        };
        let mut e_field: Vec<Complex64> = grid
            .iter()
            .map(|&z| {
                let e = reduced_field_at(&basis, &sols, &bounds, &amps, z).0;
                basis.lift(&e)[comp..comp + n].iter().sum()
            })
            .collect();
        let peak = e_field.iter().map(|e| e.norm()).fold(0.0, f64::max);
        if peak > 0.0 {
            // Fix the global phase at the peak for reproducible output.
            let at = e_field.iter().position(|e| e.norm() == peak).unwrap();
            let phase = e_field[at] / peak;
            for e in &mut e_field {
                *e /= phase * peak;
            }
        }

        let (energy_total, energy_in_slab_material) =
            mode_energy(&basis, &sols, &bounds, &amps, cavity, self.cfg.half_order)?;
        Ok(CavityModeField {
            profile: FieldProfile {
                grid: grid.to_vec(),
                e_field,
            },
            energy_total,
            energy_in_slab_material,
        })
    }
}

/// Forward amplitudes at the left face and backward amplitudes at the right
/// face of every layer.
fn internal_amplitudes(
    sols: &[LayerSolution],
    bounds: &[(Vec<Complex64>, Vec<Complex64>)],
) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
    sols.iter()
        .enumerate()
        .map(|(j, s)| {
            let (lp, lm) = &bounds[j];
            let (rp, rm) = &bounds[j + 1];
            let a_plus: Vec<Complex64> = add(&matvec(&s.a, lp), &matvec(&s.b, lm))
                .iter()
                .map(|z| z * 0.5)
                .collect();
            let b_minus: Vec<Complex64> = add(&matvec(&s.b, rp), &matvec(&s.a, rm))
                .iter()
                .map(|z| z * 0.5)
                .collect();
            (a_plus, b_minus)
        })
        .collect()
}

/// Reduced (E, Z₀H) at axial position `z`.
fn reduced_field_at(
    basis: &Basis,
    sols: &[LayerSolution],
    bounds: &[(Vec<Complex64>, Vec<Complex64>)],
    amps: &[(Vec<Complex64>, Vec<Complex64>)],
    z: f64,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let d = basis.dim();
    let i = c64::i();
    let lam0 = vacuum_lambdas(basis);
    let v0 = basis.project_eh(basis.vacuum_h_operator().as_ref());
    let vacuum = |plus: &[Complex64], minus: &[Complex64], dz: f64| {
        let mut fwd = vec![c64::new(0.0, 0.0); d];
        let mut bwd = vec![c64::new(0.0, 0.0); d];
        for k in 0..d {
            let kz = basis.k0 * lam0[k];
            fwd[k] = plus[k] * (i * kz * dz).exp();
            bwd[k] = minus[k] * (-i * kz * dz).exp();
        }
        let e = add(&fwd, &bwd);
        let diff: Vec<Complex64> = fwd.iter().zip(&bwd).map(|(a, b)| a - b).collect();
        (e, matvec(&v0, &diff))
    };
    if z < 0.0 {
        return vacuum(&bounds[0].0, &bounds[0].1, z);
    }
    let mut start = 0.0;
    for (j, s) in sols.iter().enumerate() {
        let end = start + s.def.thickness;
        if z <= end || j + 1 == sols.len() && z <= end {
            return s.fields_at(basis, &amps[j].0, &amps[j].1, z - start);
        }
        start = end;
    }
    let last = bounds.last().unwrap();
    vacuum(&last.0, &last.1, z - start)
}

fn vacuum_lambdas(basis: &Basis) -> Vec<Complex64> {
    let n = basis.n();
    let mut full = basis.kz_vac.clone();
    full.extend_from_slice(&basis.kz_vac);
    let d = Mat::from_fn(2 * n, 2 * n, |i, j| {
        if i == j {
            full[i]
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let red = basis.project(d.as_ref());
    (0..red.nrows()).map(|i| red[(i, i)]).collect()
}

/// Electric energy of the source-free cavity field, total and in slab
/// material, by Gauss–Legendre quadrature along z.
fn mode_energy(
    basis: &Basis,
    sols: &[LayerSolution],
    bounds: &[(Vec<Complex64>, Vec<Complex64>)],
    amps: &[(Vec<Complex64>, Vec<Complex64>)],
    cavity: &CavitySpec,
    half_order: usize,
) -> Result<(f64, f64)> {
    let n = basis.n();
    let toeplitz = |coeffs: &super::fourier::FourierCoefficients| {
        Mat::from_fn(n, n, |i, j| {
            let (mi, ni) = basis.orders[i];
            let (mj, nj) = basis.orders[j];
            coeffs.get(mi - mj, ni - nj)
        })
    };
    let quad = |m: &Mat<c64>, v: &[Complex64]| -> f64 {
        let mv = matvec(m, v);
        v.iter().zip(&mv).map(|(a, b)| (a.conj() * b).re).sum()
    };

    // Per-region weighting operators (Re ε and slab-material n²·indicator).
    struct Region {
        lo: f64,
        hi: f64,
        eps_re: Mat<c64>,
        material: Option<Mat<c64>>,
        eps_inv: Mat<c64>,
    }
    let mut regions = Vec::new();
    let tail = 1.0;
    let vacuum_region = |lo: f64, hi: f64| Region {
        lo,
        hi,
        eps_re: Mat::<c64>::identity(n, n),
        material: None,
        eps_inv: Mat::<c64>::identity(n, n),
    };
    regions.push(vacuum_region(-tail, 0.0));
    let mut start = 0.0;
    let slabs = [cavity.slab1, cavity.slab2];
    for (j, s) in sols.iter().enumerate() {
        let end = start + s.def.thickness;
        match s.def.kind {
            LayerKind::Homogeneous(m) if j == 1 => {
                debug_assert!(m == crate::optics::Medium::VACUUM);
                regions.push(vacuum_region(start, end));
            }
            _ => {
                let slab = if j == 0 { slabs[0] } else { slabs[1] };
                let eps = super::fourier::disk_series(
                    slab.hole_radius,
                    slab.period,
                    Complex64::new(slab.hole.permittivity().re, 0.0),
                    Complex64::new(slab.slab.permittivity().re, 0.0),
                    2 * half_order,
                );
                let ind = material_indicator(&slab, half_order);
                let n2 = slab.slab.permittivity().re;
                let material = toeplitz(&ind) * faer::Scale(c64::new(n2, 0.0));
                regions.push(Region {
                    lo: start,
                    hi: end,
                    eps_re: toeplitz(&eps),
                    material: Some(material),
                    eps_inv: s.eps_inv.clone(),
                });
            }
        }
        start = end;
    }
    regions.push(vacuum_region(start, start + tail));

    let (nodes, weights) = gauss_legendre_8();
    let mut total = 0.0;
    let mut in_material = 0.0;
    for reg in &regions {
        let panels = ((reg.hi - reg.lo) / 0.01).ceil().max(4.0) as usize;
        let h = (reg.hi - reg.lo) / panels as f64;
        for p in 0..panels {
            let a = reg.lo + p as f64 * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let z = a + 0.5 * h * (x + 1.0);
                let (e_red, h_red) = reduced_field_at(basis, sols, bounds, amps, z);
                let e = basis.lift(&e_red);
                let hh = basis.lift_h(&h_red);
                let (ex, ey) = (&e[..n], &e[n..]);
                let (hx, hy) = (&hh[..n], &hh[n..]);
                // Ez = ε⁻¹ (Ky hx − Kx hy)
                let curl: Vec<Complex64> = (0..n)
                    .map(|i| basis.ky[i] * hx[i] - basis.kx[i] * hy[i])
                    .collect();
                let ez = matvec(&reg.eps_inv, &curl);
                let wt = 0.5 * h * w;
                total +=
                    wt * (quad(&reg.eps_re, ex) + quad(&reg.eps_re, ey) + quad(&reg.eps_re, &ez));
                if let Some(m) = &reg.material {
                    in_material += wt * (quad(m, ex) + quad(m, ey) + quad(m, &ez));
                }
            }
        }
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::numerical(None, "mode energy is not positive"));
    }
    Ok((total, in_material))
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_2,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    let w = [
        0.101_228_536_290_376_26,
        0.222_381_034_453_374_47,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362,
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_47,
        0.101_228_536_290_376_26,
    ];
    (x, w)
}

/// Convenience wrapper: zero-order amplitudes for a structure.
pub fn rcwa_scatter(
    structure: &Structure,
    freq: Complex64,
    cfg: &RcwaConfig,
) -> Result<RcwaOutput> {
    RcwaSolver::new(*cfg)?.scatter(structure, freq, false)
}

pub fn rcwa_field_profile(
    structure: &Structure,
    freq: f64,
    cfg: &RcwaConfig,
    grid: &[f64],
) -> Result<FieldProfile> {
    RcwaSolver::new(*cfg)?.field_profile(structure, freq, grid)
}
