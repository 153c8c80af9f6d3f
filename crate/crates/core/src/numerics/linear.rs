use super::adam::Parameter;
use super::ops::{affine, affine_backward, sparse_affine, sparse_affine_backward, SparseRows};
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::Result;

/// Dense layer `y = x W + b` with `W` stored `[in × out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn zeros(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            weight: Parameter::new(format!("{name}.weight"), Tensor::zeros(in_dim, out_dim)),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(1, out_dim)),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let mut layer = Self::zeros(name, in_dim, out_dim);
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        for w in layer.weight.value.data_mut() {
            *w = rng.uniform_range(-limit, limit);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        affine(x, &self.weight, &self.bias)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        affine_backward(x, &mut self.weight, &mut self.bias, dy)
    }

    pub fn forward_sparse(&self, x: &SparseRows) -> Result<Tensor> {
        sparse_affine(x, &self.weight, &self.bias)
    }

    pub fn backward_sparse(&mut self, x: &SparseRows, dy: &Tensor) -> Result<()> {
        sparse_affine_backward(x, &mut self.weight, &mut self.bias, dy)
    }

    pub fn size(&self) -> usize {
        self.weight.value.len() + self.bias.value.len()
    }
}
