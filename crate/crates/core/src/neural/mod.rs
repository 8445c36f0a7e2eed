//! Small f64 neural toolkit with hand-written gradients: gated recurrent
//! encoder, dense heads, losses, Adam and checkpointing.

mod adam;
mod checkpoint;
mod gradcheck;
mod gru;
mod loss;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, GradCheck};
pub use gru::{Encoder, EncoderCache, GruCache, GruLayer};
pub use loss::{log_softmax_masked, mse, sigmoid, sl_loss, softmax, softmax_masked, SlLoss};
pub use mlp::{Activation, Dense, DenseCache, Mlp, MlpCache};

use rand::Rng;
use thiserror::Error;

use crate::SimRng;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in `±scale`.
    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut SimRng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out[i] += sum_j M[row0 + i][j] * x[j]` for `out.len()` rows.
    #[inline]
    pub fn matvec_rows_add(&self, row0: usize, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(row0 + i), x);
        }
    }

    /// `out += M x`.
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rows);
        self.matvec_rows_add(0, x, out);
    }

    /// `out[j] += sum_i M[row0 + i][j] * y[i]`.
    #[inline]
    pub fn matvec_t_rows_add(&self, row0: usize, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cols);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(row0 + i), out);
            }
        }
    }

    /// `M[row0 + i][j] += y[i] * x[j]`.
    #[inline]
    pub fn outer_rows_add(&mut self, row0: usize, y: &[f64], x: &[f64]) {
        let cols = self.cols;
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                let r = row0 + i;
                axpy(yi, x, &mut self.data[r * cols..(r + 1) * cols]);
            }
        }
    }

    /// `out += M[:, col0..col0 + x.len()] x`.
    pub fn matvec_cols_add(&self, col0: usize, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols + col0..i * self.cols + col0 + x.len()];
            *o += dot(row, x);
        }
    }

    /// `out[i] += scale * M[i][col]`.
    #[inline]
    pub fn add_column(&self, col: usize, scale: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += scale * self.data[i * self.cols + col];
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows, value.cols);
        Param { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Matrix::zeros(rows, cols))
    }
}

/// Anything owning named parameters.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.grad.data.iter_mut().for_each(|g| *g = 0.0));
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.value.data.len());
        n
    }

    /// Flat copy of all parameter values, in visiting order.
    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, p| out.extend_from_slice(&p.value.data));
        out
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, p| out.extend_from_slice(&p.grad.data));
        out
    }

    /// Multiplies every gradient by `factor`.
    fn scale_grad(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, p| p.grad.data.iter_mut().for_each(|g| *g *= factor));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
