//! One-hidden-layer perceptron trained by full-batch gradient descent on MSE,
//! with parameter gradients for the Lazy-VI correction.
//!
//! Flat parameter layout (used by gradients and shifts):
//! `[W1 row-major (width × p), b1 (width), w2 (width), b2]`, or `[w (p), b]`
//! when `width == 0` (a single linear neuron).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activated value.
    fn slope_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation \"{other}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    activation: Activation,
    /// width × p; empty (0 × p) for the linear neuron
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    /// output weights over hidden units, or over inputs when width == 0
    w2: DVector<f64>,
    b2: f64,
}

impl Mlp {
    /// Network with hidden layer of `width` units; parameters from `params`
    /// in the flat layout.
    pub fn from_params(input_dim: usize, width: usize, activation: Activation, params: &[f64]) -> Result<Self> {
        let expected = Self::count_params(input_dim, width);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        if width == 0 {
            return Ok(Self {
                activation,
                w1: DMatrix::zeros(0, input_dim),
                b1: DVector::zeros(0),
                w2: DVector::from_column_slice(&params[..input_dim]),
                b2: params[input_dim],
            });
        }
        let p = input_dim;
        let mut at = 0;
        let w1 = DMatrix::from_row_slice(width, p, &params[at..at + width * p]);
        at += width * p;
        let b1 = DVector::from_column_slice(&params[at..at + width]);
        at += width;
        let w2 = DVector::from_column_slice(&params[at..at + width]);
        at += width;
        Ok(Self {
            activation,
            w1,
            b1,
            w2,
            b2: params[at],
        })
    }

    pub fn count_params(input_dim: usize, width: usize) -> usize {
        if width == 0 {
            input_dim + 1
        } else {
            width * input_dim + 2 * width + 1
        }
    }

    pub fn width(&self) -> usize {
        self.w1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        Self::count_params(self.input_dim(), self.width())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        if self.width() == 0 {
            out.extend(self.w2.iter());
            out.push(self.b2);
            return out;
        }
        for h in 0..self.width() {
            out.extend(self.w1.row(h).iter());
        }
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.push(self.b2);
        out
    }

    /// Same architecture with parameters `θ + delta`.
    pub fn shifted(&self, delta: &[f64]) -> Result<Self> {
        let mut theta = self.params();
        if delta.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: delta.len(),
            });
        }
        for (t, d) in theta.iter_mut().zip(delta) {
            *t += d;
        }
        Self::from_params(self.input_dim(), self.width(), self.activation, &theta)
    }

    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, params: &MlpParams, seed: &RngStream) -> Result<Self> {
        let mut net = Self::init(x.ncols(), params.width, params.activation, seed);
        net.train(x, y, params.learning_rate, params.epochs)?;
        Ok(net)
    }

    /// Weights and biases drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn init(input_dim: usize, width: usize, activation: Activation, seed: &RngStream) -> Self {
        let mut rng = seed.rng();
        let mut draw = |fan_in: usize| {
            let a = 1.0 / (fan_in.max(1) as f64).sqrt();
            rng.random_range(-a..a)
        };
        let count = Self::count_params(input_dim, width);
        let mut theta = Vec::with_capacity(count);
        if width == 0 {
            theta.extend((0..=input_dim).map(|_| draw(input_dim)));
        } else {
            theta.extend((0..width * input_dim + width).map(|_| draw(input_dim)));
            theta.extend((0..=width).map(|_| draw(width)));
        }
        Self::from_params(input_dim, width, activation, &theta).expect("layout matches count")
    }

    fn hidden(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w1.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b1.transpose();
        }
        let act = self.activation;
        z.apply(|v| *v = act.apply(*v));
        z
    }

    pub fn predict_matrix(&self, x: &DMatrix<f64>) -> DVector<f64> {
        if self.width() == 0 {
            return (x * &self.w2).add_scalar(self.b2);
        }
        (self.hidden(x) * &self.w2).add_scalar(self.b2)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        if self.width() == 0 {
            return self.b2 + self.w2.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        }
        let mut out = self.b2;
        for h in 0..self.width() {
            let z = self.b1[h] + self.w1.row(h).iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            out += self.w2[h] * self.activation.apply(z);
        }
        out
    }

    /// ∂h(row)/∂θ in the flat layout, by backpropagation of the scalar output.
    pub fn param_gradient(&self, row: &[f64]) -> Vec<f64> {
        let x = DMatrix::from_row_slice(1, row.len(), row);
        self.param_gradient_matrix(&x).row(0).iter().copied().collect()
    }

    pub fn param_gradient_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let p = self.input_dim();
        let m = self.param_count();
        let mut g = DMatrix::zeros(n, m);
        if self.width() == 0 {
            for i in 0..n {
                for c in 0..p {
                    g[(i, c)] = x[(i, c)];
                }
                g[(i, p)] = 1.0;
            }
            return g;
        }
        let w = self.width();
        let hidden = self.hidden(x);
        let b1_at = w * p;
        let w2_at = b1_at + w;
        for i in 0..n {
            for h in 0..w {
                let a = hidden[(i, h)];
                // backprop: d out / d z_h
                let dz = self.w2[h] * self.activation.slope_from_output(a);
                for c in 0..p {
                    g[(i, h * p + c)] = dz * x[(i, c)];
                }
                g[(i, b1_at + h)] = dz;
                g[(i, w2_at + h)] = a;
            }
            g[(i, m - 1)] = 1.0;
        }
        g
    }

    fn train(&mut self, x: &DMatrix<f64>, y: &DVector<f64>, lr: f64, epochs: usize) -> Result<()> {
        let n = x.nrows() as f64;
        for epoch in 0..epochs {
            if self.width() == 0 {
                let out = (x * &self.w2).add_scalar(self.b2);
                let err = out - y;
                check_loss(&err, epoch)?;
                let g = err * (2.0 / n);
                let grad_w = x.transpose() * &g;
                self.w2.axpy(-lr, &grad_w, 1.0);
                self.b2 -= lr * g.sum();
                continue;
            }
            let hidden = self.hidden(x);
            let out = (&hidden * &self.w2).add_scalar(self.b2);
            let err = out - y;
            check_loss(&err, epoch)?;
            let g = err * (2.0 / n);
            let grad_w2 = hidden.transpose() * &g;
            let grad_b2 = g.sum();
            // dZ = (g w2ᵀ) ∘ act'(Z)
            let mut dz = &g * self.w2.transpose();
            let act = self.activation;
            dz.zip_apply(&hidden, |d, a| *d *= act.slope_from_output(a));
            let grad_w1 = dz.transpose() * x;
            let grad_b1 = DVector::from_iterator(dz.ncols(), dz.column_iter().map(|c| c.sum()));
            self.w1 -= grad_w1 * lr;
            self.b1.axpy(-lr, &grad_b1, 1.0);
            self.w2.axpy(-lr, &grad_w2, 1.0);
            self.b2 -= lr * grad_b2;
        }
        let final_err = self.predict_matrix(x) - y;
        check_loss(&final_err, epochs)
    }
}

fn check_loss(err: &DVector<f64>, epoch: usize) -> Result<()> {
    let loss = err.norm_squared() / err.len() as f64;
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!(
            "mlp training diverged at epoch {epoch} (loss = {loss}); lower mlp.learning_rate"
        )))
    }
}
