//! Central finite-difference gradient verification.

use super::adam::HasParameters;

pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e−8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of a scalar function at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Checks a hand-derived gradient of a scalar function.
pub fn grad_check_fn(f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], h: f64) -> f64 {
    max_relative_error(analytic, &numeric_gradient(f, x, h))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares the analytic gradients a model writes into its parameters with
/// central differences of `loss`, over every trainable coordinate.
///
/// `loss_and_grad` must populate parameter gradients for the same loss that
/// `loss` evaluates; both must be deterministic (freeze any noise first).
pub fn grad_check<M: HasParameters>(
    model: &mut M,
    h: f64,
    mut loss_and_grad: impl FnMut(&mut M) -> f64,
    mut loss: impl FnMut(&M) -> f64,
) -> GradCheckReport {
    model.zero_grads();
    loss_and_grad(model);
    let analytic: Vec<(String, bool, Vec<f64>)> = model
        .parameters()
        .iter()
        .map(|p| (p.name.clone(), p.trainable, p.grad.data().to_vec()))
        .collect();
    model.zero_grads();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (pi, (name, trainable, grads)) in analytic.iter().enumerate() {
        if !trainable {
            continue;
        }
        for (j, &g) in grads.iter().enumerate() {
            let original = model.parameters()[pi].value.data()[j];
            model.parameters_mut()[pi].value.data_mut()[j] = original + h;
            let up = loss(model);
            model.parameters_mut()[pi].value.data_mut()[j] = original - h;
            let down = loss(model);
            model.parameters_mut()[pi].value.data_mut()[j] = original;

            let err = relative_error(g, (up - down) / (2.0 * h));
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((name.clone(), j));
            }
        }
    }
    report
}
