//! Inverted dropout. The mask is drawn separately from the forward pass so
//! the exact same mask can be replayed (backward passes, gradient checks).

use super::batchnorm::Mode;
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Multipliers: 0 for dropped entries, `1/(1−rate)` for kept ones.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Tensor::filled(rows, cols, keep);
    if rate > 0.0 {
        for m in mask.data_mut() {
            if rng.uniform() < rate {
                *m = 0.0;
            }
        }
    }
    Ok(mask)
}

/// Returns the output and the mask used, if any. Eval mode and rate 0 are
/// the identity and draw nothing from `rng`.
pub fn dropout(x: &Tensor, rate: f64, rng: &mut Rng, mode: Mode) -> Result<(Tensor, Option<Tensor>)> {
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mask = dropout_mask(x.rows(), x.cols(), rate, rng)?;
    Ok((x.hadamard(&mask)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&Tensor>, dy: &Tensor) -> Result<Tensor> {
    match mask {
        Some(m) => dy.hadamard(m),
        None => Ok(dy.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let x = Tensor::row_vector(&[1.0, -2.0, 3.0]);
        let mut rng = Rng::new(0);
        let (y, mask) = dropout(&x, 0.0, &mut rng, Mode::Train).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, _) = dropout(&x, 0.4, &mut rng, Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn expectation_is_preserved() {
        let mut rng = Rng::new(123);
        let x = Tensor::row_vector(&[2.5]);
        let n = 100_000;
        let mut total = 0.0;
        for _ in 0..n {
            total += dropout(&x, 0.5, &mut rng, Mode::Train).unwrap().0.get(0, 0);
        }
        let mean = total / n as f64;
        assert!((mean - 2.5).abs() < 0.025, "{mean}");
    }

    #[test]
    fn backward_reuses_mask() {
        let mut rng = Rng::new(5);
        let x = Tensor::row_vector(&[1.0; 16]);
        let (y, mask) = dropout(&x, 0.3, &mut rng, Mode::Train).unwrap();
        let dx = dropout_backward(mask.as_ref(), &Tensor::row_vector(&[1.0; 16])).unwrap();
        assert_eq!(dx, y);
    }

    #[test]
    fn rate_one_rejected() {
        assert!(dropout_mask(1, 1, 1.0, &mut Rng::new(0)).is_err());
    }
}
