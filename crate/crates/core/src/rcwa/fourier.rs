use num_complex::Complex64;

use super::PhcSlabSpec;
use crate::Result;

/// Fourier coefficients `c_{m,n}` of a lattice-periodic function for
/// `|m|, |n| <= max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    pub max_order: usize,
    values: Vec<Complex64>,
}

impl FourierCoefficients {
    fn side(&self) -> usize {
        2 * self.max_order + 1
    }

    pub fn get(&self, m: i32, n: i32) -> Complex64 {
        let o = self.max_order as i32;
        assert!(
            m.abs() <= o && n.abs() <= o,
            "order ({m},{n}) outside table"
        );
        self.values[(m + o) as usize * self.side() + (n + o) as usize]
    }

    /// Sum of the series at a point (λ₀ units) of the unit cell.
    pub fn evaluate(&self, period: f64, x: f64, y: f64) -> Complex64 {
        let o = self.max_order as i32;
        let g = std::f64::consts::TAU / period;
        let mut acc = Complex64::new(0.0, 0.0);
        for m in -o..=o {
            for n in -o..=o {
                let phase = g * (m as f64 * x + n as f64 * y);
                acc += self.get(m, n) * Complex64::from_polar(1.0, phase);
            }
        }
        acc
    }
}

/// Coefficients of `inside` on a centred disk of radius `radius` and
/// `outside` elsewhere in a square cell of side `period`.
pub(crate) fn disk_series(
    radius: f64,
    period: f64,
    inside: Complex64,
    outside: Complex64,
    max_order: usize,
) -> FourierCoefficients {
    let eta = std::f64::consts::PI * (radius / period).powi(2);
    let side = 2 * max_order + 1;
    let o = max_order as i32;
    let mut values = Vec::with_capacity(side * side);
    for m in -o..=o {
        for n in -o..=o {
            let v = if m == 0 && n == 0 {
                outside + eta * (inside - outside)
            } else if radius == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                let g = std::f64::consts::TAU / period * ((m * m + n * n) as f64).sqrt();
                let x = g * radius;
                (inside - outside) * (2.0 * eta * libm::j1(x) / x)
            };
            values.push(v);
        }
    }
    FourierCoefficients { max_order, values }
}

/// Permittivity coefficients needed to build convolution matrices for half
/// order `half_order` (the table extends to `2·half_order`).
pub fn permittivity_fourier(slab: &PhcSlabSpec, half_order: usize) -> Result<FourierCoefficients> {
    slab.validate()?;
    Ok(disk_series(
        slab.hole_radius,
        slab.period,
        slab.hole.permittivity(),
        slab.slab.permittivity(),
        2 * half_order,
    ))
}

/// Coefficients of 1/ε, for the inverse factorization rule.
pub(crate) fn inverse_permittivity_fourier(
    slab: &PhcSlabSpec,
    half_order: usize,
) -> FourierCoefficients {
    disk_series(
        slab.hole_radius,
        slab.period,
        1.0 / slab.hole.permittivity(),
        1.0 / slab.slab.permittivity(),
        2 * half_order,
    )
}

/// Coefficients of the slab-material indicator (1 in the slab, 0 in holes).
pub(crate) fn material_indicator(slab: &PhcSlabSpec, half_order: usize) -> FourierCoefficients {
    disk_series(
        slab.hole_radius,
        slab.period,
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        2 * half_order,
    )
}
