use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;

use super::KernelRidgeParams;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Gaussian-kernel ridge regression on the centered response:
/// `f(x) = ȳ + Σᵢ αᵢ exp(−‖x − xᵢ‖² / (2h²))`, `α = (K + λI)⁻¹ (y − ȳ)`.
#[derive(Debug, Clone)]
pub struct KernelRidgeModel {
    train: DMatrix<f64>,
    alpha: DVector<f64>,
    y_mean: f64,
    bandwidth: f64,
    penalty: f64,
}

impl KernelRidgeModel {
    pub fn fit(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        params: &KernelRidgeParams,
        seed: &RngStream,
    ) -> Result<Self> {
        let n = x.nrows();
        let bandwidth = match params.bandwidth {
            Some(h) => h,
            None => median_heuristic_bandwidth(x, params.bandwidth_subsample, seed),
        };
        let penalty = params.penalty.unwrap_or(1e-3 * n as f64);
        let y_mean = y.mean();
        let yc = y.add_scalar(-y_mean);

        let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0 + penalty;
            for j in 0..i {
                let v = (-gamma * sq_dist_rows(x, i, x, j)).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::numeric("kernel ridge system is not positive definite"))?;
        let alpha = chol.solve(&yc);
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::numeric("kernel ridge produced non-finite weights"));
        }
        Ok(Self {
            train: x.clone(),
            alpha,
            y_mean,
            bandwidth,
            penalty,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let gamma = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let mut acc = 0.0;
        for i in 0..self.train.nrows() {
            let d: f64 = row
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    let t = v - self.train[(i, c)];
                    t * t
                })
                .sum();
            acc += self.alpha[i] * (-gamma * d).exp();
        }
        self.y_mean + acc
    }
}

fn sq_dist_rows(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols())
        .map(|c| {
            let t = a[(i, c)] - b[(j, c)];
            t * t
        })
        .sum()
}

/// Median pairwise Euclidean distance over at most `subsample` rows drawn
/// without replacement. Returns 1 when every sampled pair coincides.
pub fn median_heuristic_bandwidth(x: &DMatrix<f64>, subsample: usize, seed: &RngStream) -> f64 {
    let n = x.nrows();
    let rows: Vec<usize> = if n > subsample {
        let mut idx = sample(&mut seed.rng(), n, subsample).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[..a] {
            d.push(sq_dist_rows(x, i, x, j).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(40, 2, |i, j| ((i as f64) * (0.3 + j as f64)).sin());
        let y = DVector::from_fn(40, |i, _| x[(i, 0)].powi(2) + x[(i, 1)]);
        (x, y)
    }

    #[test]
    fn infinite_penalty_predicts_mean() {
        let (x, y) = data();
        let params = KernelRidgeParams {
            penalty: Some(1e14),
            ..KernelRidgeParams::default()
        };
        let m = KernelRidgeModel::fit(&x, &y, &params, &RngStream::default()).unwrap();
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert!((m.predict(&row) - y.mean()).abs() < 1e-9);
        }
    }

    #[test]
    fn small_penalty_fits_training_data() {
        let (x, y) = data();
        let params = KernelRidgeParams {
            penalty: Some(1e-6),
            ..KernelRidgeParams::default()
        };
        let m = KernelRidgeModel::fit(&x, &y, &params, &RngStream::default()).unwrap();
        let mse: f64 = (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                (m.predict(&row) - y[i]).powi(2)
            })
            .sum::<f64>()
            / x.nrows() as f64;
        assert!(mse < 1e-3 * y.variance());
    }

    #[test]
    fn weight_norm_shrinks_with_penalty() {
        let (x, y) = data();
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let params = KernelRidgeParams {
                penalty: Some(1e-3 * 2f64.powi(k)),
                bandwidth: Some(0.8),
                ..KernelRidgeParams::default()
            };
            let m = KernelRidgeModel::fit(&x, &y, &params, &RngStream::default()).unwrap();
            let norm = m.alpha.norm();
            assert!(norm <= last + 1e-12);
            last = norm;
        }
    }

    #[test]
    fn median_of_known_points() {
        // distances 1, 2, 3 -> median 2
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        assert_eq!(median_heuristic_bandwidth(&x, 500, &RngStream::default()), 2.0);
    }

    #[test]
    fn subsample_is_deterministic() {
        let x = DMatrix::from_fn(700, 2, |i, j| ((i * (j + 3)) % 17) as f64);
        let a = median_heuristic_bandwidth(&x, 100, &RngStream::new(4, 1));
        let b = median_heuristic_bandwidth(&x, 100, &RngStream::new(4, 1));
        assert_eq!(a, b);
    }
}
