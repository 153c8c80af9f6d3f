//! Differentiable operations. Each forward function has a matching
//! `*_backward` that takes the upstream gradient and whatever the forward
//! pass produced; parameter gradients are accumulated in place.

use serde::{Deserialize, Serialize};

use super::adam::Parameter;
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

/// `y = x W + b`, with `b` broadcast over rows.
pub fn affine(x: &Tensor, weight: &Parameter, bias: &Parameter) -> Result<Tensor> {
    let (in_dim, out_dim) = weight.shape();
    if x.cols() != in_dim {
        return Err(Error::Shape {
            op: "affine",
            left: x.shape(),
            right: weight.shape(),
        });
    }
    bias.value.ensure_shape("affine bias", (1, out_dim))?;
    let mut y = x.matmul(&weight.value)?;
    add_row_bias(&mut y, bias.value.data());
    Ok(y)
}

/// Accumulates `∂L/∂W`, `∂L/∂b` and returns `∂L/∂x`.
pub fn affine_backward(
    x: &Tensor,
    weight: &mut Parameter,
    bias: &mut Parameter,
    dy: &Tensor,
) -> Result<Tensor> {
    dy.ensure_shape("affine_backward", (x.rows(), weight.value.cols()))?;
    x.accumulate_transposed_product(dy, &mut weight.grad)?;
    bias.grad.add_assign(&dy.column_sums())?;
    dy.matmul_transposed(&weight.value)
}

pub(crate) fn add_row_bias(y: &mut Tensor, bias: &[f64]) {
    let cols = y.cols();
    if cols == 0 {
        return;
    }
    for row in y.data_mut().chunks_exact_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Rows of sparse non-negative inputs, e.g. a batch of word-count vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl SparseRows {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows.len(), self.cols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                t.set(i, j as usize, t.get(i, j as usize) + v);
            }
        }
        t
    }
}

/// Sparse-input affine map; input gradients are never needed.
pub fn sparse_affine(x: &SparseRows, weight: &Parameter, bias: &Parameter) -> Result<Tensor> {
    let (in_dim, out_dim) = weight.shape();
    if x.cols != in_dim {
        return Err(Error::Shape {
            op: "sparse_affine",
            left: (x.rows.len(), x.cols),
            right: weight.shape(),
        });
    }
    bias.value.ensure_shape("sparse_affine bias", (1, out_dim))?;
    let mut y = Tensor::zeros(x.rows.len(), out_dim);
    for (i, row) in x.rows.iter().enumerate() {
        let out = y.row_mut(i);
        out.copy_from_slice(bias.value.data());
        for &(j, v) in row {
            axpy(v, weight.value.row(j as usize), out);
        }
    }
    Ok(y)
}

pub fn sparse_affine_backward(
    x: &SparseRows,
    weight: &mut Parameter,
    bias: &mut Parameter,
    dy: &Tensor,
) -> Result<()> {
    dy.ensure_shape("sparse_affine_backward", (x.rows.len(), weight.value.cols()))?;
    for (i, row) in x.rows.iter().enumerate() {
        let g = dy.row(i);
        for &(j, v) in row {
            axpy(v, g, weight.grad.row_mut(j as usize));
        }
    }
    bias.grad.add_assign(&dy.column_sums())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => softplus(x),
            Activation::Linear => x,
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Softplus => sigmoid(x),
            Activation::Linear => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(x: &Tensor, kind: Activation) -> Tensor {
    x.map(|v| kind.apply(v))
}

pub fn activate_backward(x: &Tensor, y: &Tensor, kind: Activation, dy: &Tensor) -> Result<Tensor> {
    dy.ensure_shape("activate_backward", x.shape())?;
    let mut dx = dy.clone();
    for ((d, &xi), &yi) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
        *d *= kind.derivative(xi, yi);
    }
    Ok(dx)
}

/// Row-wise softmax, max-shifted.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for r in 0..y.rows() {
        softmax_in_place(y.row_mut(r));
    }
    y
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// `dx = y ⊙ (dy − ⟨dy, y⟩)` per row.
pub fn softmax_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.ensure_shape("softmax_backward", y.shape())?;
    let mut dx = Tensor::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), dy.row(r));
        let inner = dot(yr, gr);
        for ((d, &yi), &gi) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *d = yi * (gi - inner);
        }
    }
    Ok(dx)
}

pub fn log_softmax(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for r in 0..y.rows() {
        log_softmax_in_place(y.row_mut(r));
    }
    y
}

pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    for v in row.iter_mut() {
        *v -= log_total;
    }
}

/// Given `y = log_softmax(x)`: `dx = dy − softmax(x) · Σ dy` per row.
pub fn log_softmax_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.ensure_shape("log_softmax_backward", y.shape())?;
    let mut dx = dy.clone();
    for r in 0..y.rows() {
        let total: f64 = dy.row(r).iter().sum();
        for (d, &yi) in dx.row_mut(r).iter_mut().zip(y.row(r)) {
            *d -= yi.exp() * total;
        }
    }
    Ok(dx)
}
