//! Dense math substrate: tensors, differentiable ops with explicit backward
//! functions, batch normalization, dropout, a seeded PRNG and Adam.

pub mod adam;
pub mod arrays;
pub mod batchnorm;
pub mod dropout;
pub mod grad_check;
pub mod linear;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use adam::{Adam, HasParameters, Parameter};
pub use arrays::{ArrayBundle, Dtype};
pub use batchnorm::{BatchNorm, BatchNormCache, Mode};
pub use grad_check::{grad_check, GradCheckReport};
pub use linear::Linear;
pub use ops::{Activation, SparseRows};
pub use rng::Rng;
pub use tensor::Tensor;
