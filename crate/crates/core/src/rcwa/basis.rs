use faer::{c64, Mat, MatRef};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Polarization, RcwaConfig};
use crate::units::TAU;

/// Invariant subspace of the y → −y mirror used to shrink the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    None,
    /// Ex even and Ey odd under y → −y (contains x-polarized normal incidence).
    MirrorYEven,
    /// Ex odd and Ey even under y → −y (contains y-polarized normal incidence).
    MirrorYOdd,
}

/// Plane-wave basis for one frequency and Bloch vector.
///
/// Transverse wavevectors are stored normalized by the (complex) vacuum
/// wavenumber `k0 = 2πf`, so `kx[i] = k_{x,i}/k0`.
#[derive(Debug, Clone)]
pub struct Basis {
    pub half_order: usize,
    pub orders: Vec<(i32, i32)>,
    pub k0: Complex64,
    pub kx: Vec<Complex64>,
    pub ky: Vec<Complex64>,
    /// Normalized longitudinal wavenumber `kz/k0` of each order in vacuum.
    pub kz_vac: Vec<Complex64>,
    pub propagating: Vec<bool>,
    pub symmetry: Symmetry,
    /// Columns of the isometry from reduced to full electric-field coordinates.
    columns: Vec<Vec<(usize, f64)>>,
    /// Same for the magnetic field, which has the opposite mirror parity.
    h_columns: Vec<Vec<(usize, f64)>>,
}

/// Longitudinal wavenumber branch: outgoing for propagating orders, decaying
/// for evanescent ones; continuous into the complex frequency plane.
pub(crate) fn kz_branch(k0: Complex64, kz2: Complex64, kt2: f64) -> Complex64 {
    let s = kz2.sqrt();
    let propagating = kt2 < k0.re * k0.re;
    let flip = if propagating { s.re < 0.0 } else { s.im < 0.0 };
    if flip {
        -s
    } else {
        s
    }
}

impl Symmetry {
    /// Parity class of the magnetic field accompanying an electric field of this class.
    pub fn dual(self) -> Symmetry {
        match self {
            Symmetry::None => Symmetry::None,
            Symmetry::MirrorYEven => Symmetry::MirrorYOdd,
            Symmetry::MirrorYOdd => Symmetry::MirrorYEven,
        }
    }
}

impl Basis {
    pub fn new(period: f64, freq: Complex64, cfg: &RcwaConfig) -> Self {
        let m = cfg.half_order as i32;
        let k0 = TAU * freq;
        let g = TAU / period;
        let mut orders = Vec::new();
        let (mut kx, mut ky, mut kz_vac, mut propagating) = (vec![], vec![], vec![], vec![]);
        for i in -m..=m {
            for j in -m..=m {
                orders.push((i, j));
                let kxp = g * (cfg.bloch_k[0] + i as f64);
                let kyp = g * (cfg.bloch_k[1] + j as f64);
                let kt2 = kxp * kxp + kyp * kyp;
                let kz = kz_branch(k0, k0 * k0 - kt2, kt2);
                kx.push(kxp / k0);
                ky.push(kyp / k0);
                kz_vac.push(kz / k0);
                propagating.push(kt2 < k0.re * k0.re);
            }
        }
        let symmetry = cfg.symmetry();
        let columns = build_columns(cfg.half_order, orders.len(), symmetry);
        let h_columns = build_columns(cfg.half_order, orders.len(), symmetry.dual());
        Basis {
            half_order: cfg.half_order,
            orders,
            k0,
            kx,
            ky,
            kz_vac,
            propagating,
            symmetry,
            columns,
            h_columns,
        }
    }

    /// Number of plane waves per field component.
    pub fn n(&self) -> usize {
        self.orders.len()
    }

    /// Full field dimension `2N` (Ex and Ey blocks).
    pub fn full_dim(&self) -> usize {
        2 * self.n()
    }

    /// Working dimension after the symmetry reduction.
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn index_of(&self, m: i32, n: i32) -> usize {
        let h = self.half_order as i32;
        ((m + h) * (2 * h + 1) + (n + h)) as usize
    }

    pub fn zero_order(&self) -> usize {
        self.index_of(0, 0)
    }

    /// Reduced coordinate carrying the zero-order field of the given polarization.
    pub fn input_column(&self, pol: Polarization) -> Option<usize> {
        let target = match pol {
            Polarization::X => self.zero_order(),
            Polarization::Y => self.n() + self.zero_order(),
        };
        self.columns
            .iter()
            .position(|col| col.len() == 1 && col[0].0 == target)
    }

    /// `Uᴴ X U` for a full-size operator `X` acting within the E space.
    pub fn project(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        sandwich(&self.columns, x, &self.columns)
    }

    /// Reduced form of an operator mapping E coordinates to H coordinates.
    pub fn project_eh(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        sandwich(&self.h_columns, x, &self.columns)
    }

    /// Reduced form of an operator mapping H coordinates to E coordinates.
    pub fn project_he(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        sandwich(&self.columns, x, &self.h_columns)
    }

    /// Full magnetic-field coordinates from reduced ones.
    pub fn lift_h(&self, y: &[Complex64]) -> Vec<Complex64> {
        lift_with(&self.h_columns, self.full_dim(), y)
    }

    /// Full field coordinates from reduced ones.
    pub fn lift(&self, y: &[Complex64]) -> Vec<Complex64> {
        lift_with(&self.columns, self.full_dim(), y)
    }

    /// Reduced coordinates of a full field vector (orthogonal projection).
    pub fn restrict(&self, e: &[Complex64]) -> Vec<Complex64> {
        if self.symmetry == Symmetry::None {
            return e.to_vec();
        }
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(k, w)| e[k] * w).sum())
            .collect()
    }

    /// Vacuum magnetic-field operator: maps the electric amplitudes of forward
    /// waves to their normalized transverse H (`Z₀·H`), full size.
    pub fn vacuum_h_operator(&self) -> Mat<c64> {
        let n = self.n();
        let mut v = Mat::<c64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            let (kx, ky, kz) = (self.kx[i], self.ky[i], self.kz_vac[i]);
            // Q₀ = [[−KxKy, Kx²−1], [1−Ky², KyKx]], V₀ = Q₀ Λ₀⁻¹
            v[(i, i)] = -kx * ky / kz;
            v[(i, n + i)] = (kx * kx - 1.0) / kz;
            v[(n + i, i)] = (1.0 - ky * ky) / kz;
            v[(n + i, n + i)] = ky * kx / kz;
        }
        v
    }

    /// Time-averaged axial power flux of a set of waves with electric
    /// amplitudes `e` (full coordinates) travelling in vacuum; only
    /// propagating orders carry power.
    pub fn flux(&self, e: &[Complex64]) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for i in 0..n {
            if !self.propagating[i] {
                continue;
            }
            let (kx, ky, kz) = (self.kx[i], self.ky[i], self.kz_vac[i]);
            let (ex, ey) = (e[i], e[n + i]);
            let hx = (-kx * ky * ex + (kx * kx - 1.0) * ey) / kz;
            let hy = ((1.0 - ky * ky) * ex + ky * kx * ey) / kz;
            total += (ex * hy.conj() - ey * hx.conj()).re;
        }
        total
    }
}

fn sandwich(
    rows: &[Vec<(usize, f64)>],
    x: MatRef<'_, c64>,
    cols: &[Vec<(usize, f64)>],
) -> Mat<c64> {
    let full = x.nrows();
    let mut xu = Mat::<c64>::zeros(full, cols.len());
    for (c, col) in cols.iter().enumerate() {
        for &(k, w) in col {
            for r in 0..full {
                xu[(r, c)] += x[(r, k)] * w;
            }
        }
    }
    let mut out = Mat::<c64>::zeros(rows.len(), cols.len());
    for (r, row) in rows.iter().enumerate() {
        for &(k, w) in row {
            for c in 0..cols.len() {
                out[(r, c)] += xu[(k, c)] * w;
            }
        }
    }
    out
}

fn lift_with(cols: &[Vec<(usize, f64)>], full: usize, y: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); full];
    for (c, col) in cols.iter().enumerate() {
        for &(k, w) in col {
            out[k] += y[c] * w;
        }
    }
    out
}

fn build_columns(half_order: usize, n: usize, symmetry: Symmetry) -> Vec<Vec<(usize, f64)>> {
    let h = half_order as i32;
    let side = 2 * h + 1;
    let idx = |m: i32, k: i32| ((m + h) * side + (k + h)) as usize;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols = Vec::new();
    let (ex_even, ey_even) = match symmetry {
        Symmetry::None => return (0..2 * n).map(|k| vec![(k, 1.0)]).collect(),
        Symmetry::MirrorYEven => (true, false),
        Symmetry::MirrorYOdd => (false, true),
    };
    for (offset, even) in [(0usize, ex_even), (n, ey_even)] {
        for m in -h..=h {
            if even {
                cols.push(vec![(offset + idx(m, 0), 1.0)]);
            }
            for k in 1..=h {
                let sign = if even { 1.0 } else { -1.0 };
                cols.push(vec![
                    (offset + idx(m, k), s),
                    (offset + idx(m, -k), sign * s),
                ]);
            }
        }
    }
    cols
}
