use faer::prelude::*;
use faer::{c64, Mat};

use crate::{Error, Result};

/// Scattering matrix in a vacuum mode basis.
///
/// `s11`: reflection for incidence from the left, `s21`: left → right
/// transmission, `s12`: right → left transmission, `s22`: reflection for
/// incidence from the right.
#[derive(Debug, Clone)]
pub struct SMatrix {
    pub s11: Mat<c64>,
    pub s12: Mat<c64>,
    pub s21: Mat<c64>,
    pub s22: Mat<c64>,
}

impl SMatrix {
    pub fn identity(dim: usize) -> Self {
        SMatrix {
            s11: Mat::zeros(dim, dim),
            s12: Mat::identity(dim, dim),
            s21: Mat::identity(dim, dim),
            s22: Mat::zeros(dim, dim),
        }
    }

    /// Free propagation with the given diagonal phase factors.
    pub fn propagation(phases: &[c64]) -> Self {
        let d = phases.len();
        let diag = Mat::from_fn(d, d, |i, j| {
            if i == j {
                phases[i]
            } else {
                c64::new(0.0, 0.0)
            }
        });
        SMatrix {
            s11: Mat::zeros(d, d),
            s12: diag.clone(),
            s21: diag,
            s22: Mat::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.s11.nrows()
    }

    /// Redheffer star product: `self` on the left, `other` on the right.
    pub fn star(&self, other: &SMatrix) -> Result<SMatrix> {
        let d = self.dim();
        let eye = Mat::<c64>::identity(d, d);
        let f = &eye - &other.s11 * &self.s22;
        let g = &eye - &self.s22 * &other.s11;
        let lu_f = f.partial_piv_lu();
        let lu_g = g.partial_piv_lu();

        let x1 = lu_f.solve(&other.s11 * &self.s21);
        let x2 = lu_f.solve(&other.s12);
        let y1 = lu_g.solve(&self.s21);
        let y2 = lu_g.solve(&self.s22 * &other.s12);

        let out = SMatrix {
            s11: &self.s11 + &self.s12 * &x1,
            s12: &self.s12 * &x2,
            s21: &other.s21 * &y1,
            s22: &other.s22 + &other.s21 * &y2,
        };
        if !out.is_finite() {
            return Err(Error::numerical(None, "singular interface in star product"));
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        [&self.s11, &self.s12, &self.s21, &self.s22]
            .iter()
            .all(|m| {
                m.col_iter()
                    .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
            })
    }

    /// Mirror image of the element (left and right ports exchanged).
    pub fn flipped(&self) -> SMatrix {
        SMatrix {
            s11: self.s22.clone(),
            s12: self.s21.clone(),
            s21: self.s12.clone(),
            s22: self.s11.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(d: usize, seed: u64) -> Mat<c64> {
        let mut s = seed;
        Mat::from_fn(d, d, |_, _| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let a = ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let b = ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
            c64::new(0.4 * a, 0.4 * b)
        })
    }

    fn sample(d: usize, seed: u64) -> SMatrix {
        SMatrix {
            s11: random(d, seed),
            s12: random(d, seed + 1),
            s21: random(d, seed + 2),
            s22: random(d, seed + 3),
        }
    }

    fn max_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
        let mut m = 0.0f64;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                m = m.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        m
    }

    #[test]
    fn identity_is_neutral() {
        let s = sample(4, 7);
        let id = SMatrix::identity(4);
        let l = id.star(&s).unwrap();
        let r = s.star(&id).unwrap();
        for (a, b) in [
            (&l.s11, &s.s11),
            (&l.s21, &s.s21),
            (&r.s22, &s.s22),
            (&r.s12, &s.s12),
        ] {
            assert!(max_diff(a, b) < 1e-14);
        }
    }

    #[test]
    fn star_product_is_associative() {
        let (a, b, c) = (sample(3, 1), sample(3, 11), sample(3, 21));
        let left = a.star(&b).unwrap().star(&c).unwrap();
        let right = a.star(&b.star(&c).unwrap()).unwrap();
        for (x, y) in [
            (&left.s11, &right.s11),
            (&left.s12, &right.s12),
            (&left.s21, &right.s21),
            (&left.s22, &right.s22),
        ] {
            assert!(max_diff(x, y) < 1e-12);
        }
    }
}
