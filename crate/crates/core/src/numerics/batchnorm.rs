use super::adam::Parameter;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-column batch normalization with a learnable gain and shift.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// What a forward pass leaves behind for backward and for the
/// running-statistics update.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    mode: Mode,
    normalized: Tensor,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(prefix: &str, dim: usize) -> Self {
        BatchNorm {
            gamma: Parameter::new(format!("{prefix}.gamma"), Tensor::filled(1, dim, 1.0)),
            beta: Parameter::new(format!("{prefix}.beta"), Tensor::zeros(1, dim)),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            eps: BATCHNORM_EPS,
            momentum: BATCHNORM_MOMENTUM,
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    /// Pure with respect to `self`: running statistics change only via
    /// [`BatchNorm::update_running`].
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        let dim = self.dim();
        if x.cols() != dim {
            return Err(Error::Shape {
                op: "batchnorm",
                left: x.shape(),
                right: (1, dim),
            });
        }
        let n = x.rows();
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::InvalidInput(format!(
                        "batchnorm in train mode needs at least 2 rows, got {n}"
                    )));
                }
                column_moments(x)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut normalized = x.clone();
        let mut out = Tensor::zeros(n, dim);
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for r in 0..n {
            let xr = normalized.row_mut(r);
            let or = out.row_mut(r);
            for j in 0..dim {
                let xh = (xr[j] - mean[j]) * inv_std[j];
                xr[j] = xh;
                or[j] = gamma[j] * xh + beta[j];
            }
        }
        Ok((
            out,
            BatchNormCache {
                mode,
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Tensor) -> Result<Tensor> {
        let dim = self.dim();
        let n = dy.rows();
        dy.ensure_shape("batchnorm_backward", cache.normalized.shape())?;
        let xhat = &cache.normalized;
        let gamma = self.gamma.value.data().to_vec();

        let mut sum_dy = vec![0.0; dim];
        let mut sum_dy_xhat = vec![0.0; dim];
        for r in 0..n {
            let (g, xh) = (dy.row(r), xhat.row(r));
            for j in 0..dim {
                sum_dy[j] += g[j];
                sum_dy_xhat[j] += g[j] * xh[j];
            }
        }
        for j in 0..dim {
            self.beta.grad.data_mut()[j] += sum_dy[j];
            self.gamma.grad.data_mut()[j] += sum_dy_xhat[j];
        }

        let mut dx = Tensor::zeros(n, dim);
        match cache.mode {
            Mode::Eval => {
                for r in 0..n {
                    let (g, d) = (dy.row(r), dx.row_mut(r));
                    for j in 0..dim {
                        d[j] = g[j] * gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                // dx = γ·s/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
                let nf = n as f64;
                for r in 0..n {
                    let (g, xh) = (dy.row(r), xhat.row(r));
                    let d = dx.row_mut(r);
                    for j in 0..dim {
                        d[j] = gamma[j] * cache.inv_std[j] / nf
                            * (nf * g[j] - sum_dy[j] - xh[j] * sum_dy_xhat[j]);
                    }
                }
            }
        }
        Ok(dx)
    }

    /// Exponential moving average of batch statistics; running variance
    /// uses the unbiased batch estimate. No-op for eval-mode caches.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let n = cache.normalized.rows() as f64;
        let unbias = n / (n - 1.0);
        let m = self.momentum;
        for j in 0..self.dim() {
            self.running_mean[j] = (1.0 - m) * self.running_mean[j] + m * cache.batch_mean[j];
            self.running_var[j] = (1.0 - m) * self.running_var[j] + m * cache.batch_var[j] * unbias;
        }
    }
}

/// Per-column mean and population variance.
fn column_moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let dim = x.cols();
    let mut mean = vec![0.0; dim];
    for row in x.rows_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in x.rows_iter() {
        for j in 0..dim {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check::{max_relative_error, numeric_gradient};
    use crate::numerics::tensor::dot;

    #[test]
    fn two_row_column_normalizes_to_unit() {
        let bn = BatchNorm::new("bn", 1);
        let x = Tensor::from_rows(&[[1.0], [3.0]]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        let expected = 1.0 / (1.0 + BATCHNORM_EPS).sqrt();
        assert!((y.get(0, 0) + expected).abs() < 1e-12);
        assert!((y.get(1, 0) - expected).abs() < 1e-12);
        assert!((y.get(1, 0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn eval_with_default_stats_is_near_identity() {
        let bn = BatchNorm::new("bn", 3);
        let x = Tensor::from_rows(&[[0.5, -2.0, 7.0]]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Eval).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
    }

    #[test]
    fn train_output_has_beta_mean_and_gamma_std() {
        let mut bn = BatchNorm::new("bn", 2);
        bn.gamma.value = Tensor::row_vector(&[2.0, 0.5]);
        bn.beta.value = Tensor::row_vector(&[-1.0, 3.0]);
        let x = Tensor::from_rows(&[[1.0, 10.0], [4.0, -3.0], [0.0, 2.0], [9.0, 5.0]]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..4).map(|r| y.get(r, j)).collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
            assert!((mean - bn.beta.value.get(0, j)).abs() < 1e-12);
            assert!((std - bn.gamma.value.get(0, j)).abs() < 1e-5);
        }
    }

    #[test]
    fn single_row_train_batch_is_rejected() {
        let bn = BatchNorm::new("bn", 2);
        assert!(bn.forward(&Tensor::zeros(1, 2), Mode::Train).is_err());
        assert!(bn.forward(&Tensor::zeros(1, 2), Mode::Eval).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm::new("bn", 1);
        let x = Tensor::from_rows(&[[1.0], [3.0]]).unwrap();
        let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
        bn.update_running(&cache);
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        // unbiased variance 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn train_backward_matches_finite_differences() {
        let mut bn = BatchNorm::new("bn", 2);
        bn.gamma.value = Tensor::row_vector(&[1.5, 0.7]);
        let xs = [0.3, -1.0, 2.0, 0.4, -0.6, 1.1];
        let up = [0.2, -0.5, 1.0, 0.3, -0.7, 0.9];
        let x = Tensor::from_vec(3, 2, xs.to_vec()).unwrap();
        let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
        let dx = bn
            .backward(&cache, &Tensor::from_vec(3, 2, up.to_vec()).unwrap())
            .unwrap();
        let probe = bn.clone();
        let numeric = numeric_gradient(
            |v| {
                let t = Tensor::from_vec(3, 2, v.to_vec()).unwrap();
                dot(probe.forward(&t, Mode::Train).unwrap().0.data(), &up)
            },
            &xs,
            1e-5,
        );
        assert!(max_relative_error(dx.data(), &numeric) < 1e-6);
    }
}
