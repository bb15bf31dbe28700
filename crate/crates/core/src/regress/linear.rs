use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Affine predictor `intercept + coefficientsᵀ x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

pub(crate) struct Centered {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x_mean: Vec<f64>,
    pub y_mean: f64,
}

pub(crate) fn center(x: &DMatrix<f64>, y: &DVector<f64>) -> Centered {
    let n = x.nrows() as f64;
    let mut xc = x.clone();
    let mut x_mean = Vec::with_capacity(x.ncols());
    for mut col in xc.column_iter_mut() {
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
        x_mean.push(m);
    }
    let y_mean = y.sum() / n;
    let yc = y.add_scalar(-y_mean);
    Centered {
        x: xc,
        y: yc,
        x_mean,
        y_mean,
    }
}

fn assemble(c: &Centered, beta: DVector<f64>) -> Result<LinearModel> {
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::numeric("non-finite least-squares coefficients"));
    }
    let intercept = c.y_mean - beta.iter().zip(&c.x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients: beta.iter().copied().collect(),
    })
}

/// Least squares through a Householder QR of the centered design. Falls back to
/// the minimum-norm SVD solution when the design is rank deficient.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel> {
    let c = center(x, y);
    let (n, p) = c.x.shape();
    if n > p {
        if let Some(beta) = qr_solve(&c.x, &c.y) {
            return assemble(&c, beta);
        }
    }
    log::warn!("ols: design is rank deficient ({n} x {p}); using minimum-norm solution");
    let beta = min_norm_solve(&c.x, &c.y)?;
    assemble(&c, beta)
}

/// Ridge regression minimizing ‖y − Xβ − b‖² + penalty·‖β‖², intercept unpenalized.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, penalty: f64) -> Result<LinearModel> {
    let c = center(x, y);
    let (n, p) = c.x.shape();
    let root = penalty.sqrt();
    let aug = DMatrix::from_fn(n + p, p, |i, j| {
        if i < n {
            c.x[(i, j)]
        } else if i - n == j {
            root
        } else {
            0.0
        }
    });
    let rhs = DVector::from_fn(n + p, |i, _| if i < n { c.y[i] } else { 0.0 });
    let beta = qr_solve(&aug, &rhs).ok_or_else(|| Error::numeric("ridge system is singular"))?;
    assemble(&c, beta)
}

/// Solves min ‖a·β − b‖ for a tall full-rank `a`; `None` if `a` looks rank deficient.
pub(crate) fn qr_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let p = a.ncols();
    let qr = a.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = max_diag * 1e-10 * (a.nrows().max(p) as f64);
    if max_diag == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= tol) {
        return None;
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let head = qtb.rows(0, p).into_owned();
    r.solve_upper_triangular(&head)
}

pub(crate) fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, eps.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::numeric(format!("svd solve failed: {e}")))
}
