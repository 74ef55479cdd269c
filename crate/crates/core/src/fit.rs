//! Damped least squares over plain closures, with finite-difference Jacobians.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};

/// Outcome of [`least_squares`].
#[derive(Debug, Clone)]
pub(crate) struct LsqOutcome {
    pub params: Vec<f64>,
    pub residual_rms: f64,
    pub evaluations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    f: &'a dyn Fn(&[f64]) -> Vec<f64>,
    x: DVector<f64>,
    scales: &'a [f64],
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = (self.f)(self.x.as_slice());
        r.iter()
            .all(|v| v.is_finite())
            .then(|| DVector::from_vec(r))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.x.len();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let h = 1e-6 * self.x[j].abs().max(self.scales[j]);
            let mut xp = self.x.clone();
            let mut xm = self.x.clone();
            xp[j] += h;
            xm[j] -= h;
            let rp = (self.f)(xp.as_slice());
            let rm = (self.f)(xm.as_slice());
            cols.push(
                rp.iter()
                    .zip(&rm)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect::<Vec<_>>(),
            );
        }
        let m = cols.first()?.len();
        let jac = DMatrix::from_fn(m, n, |i, j| cols[j][i]);
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

pub(crate) fn rms(r: &[f64]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

/// Minimizes `Σ f(x)²` from `x0`. `scales` sets the typical magnitude of each
/// parameter (finite-difference step floor).
pub(crate) fn least_squares(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    scales: &[f64],
    patience: usize,
) -> LsqOutcome {
    let initial_rms = rms(&f(x0));
    let problem = Problem {
        f,
        x: DVector::from_column_slice(x0),
        scales,
    };
    let (problem, report) = LevenbergMarquardt::new()
        .with_xtol(1e-10)
        .with_ftol(1e-14)
        .with_patience(patience)
        .minimize(problem);
    let params = problem.x.as_slice().to_vec();
    let residual_rms = rms(&f(&params));
    LsqOutcome {
        converged: report.termination.was_successful() && residual_rms <= initial_rms,
        params,
        residual_rms,
        evaluations: report.number_of_evaluations,
    }
}
