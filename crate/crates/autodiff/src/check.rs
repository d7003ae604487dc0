//! Central finite differences for validating analytic gradients.

use crate::tensor::Tensor;

/// Numerical gradient of `f` with respect to `inputs[which]` by central differences.
pub fn central_difference(
    mut f: impl FnMut(&[Tensor]) -> f64,
    inputs: &[Tensor],
    which: usize,
    step: f64,
) -> Tensor {
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grad = Tensor::zeros(inputs[which].shape());
    for i in 0..inputs[which].len() {
        let orig = inputs[which].data()[i];
        work[which].data_mut()[i] = orig + step;
        let fp = f(&work);
        work[which].data_mut()[i] = orig - step;
        let fm = f(&work);
        work[which].data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * step);
    }
    grad
}

/// Largest entrywise relative error `|a − n| / max(|a|, |n|, floor)`.
///
/// `floor` keeps entries whose true gradient is essentially zero from
/// dominating through round-off.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
