use super::Tensor;
use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function, in double precision.
///
/// Element `i` of the result is `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_grad<F>(mut f: F, x: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(format!(
                "function value not finite at element {i} ({plus}, {minus})"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Largest elementwise relative error between two gradients.
///
/// Uses `|a - b| / max(|a| + |b|, floor)` so entries that are both near zero
/// do not dominate.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(floor))
        .fold(0.0, f64::max)
}
