//! Central finite differences for checking tape gradients.

use super::Tensor;

/// Numeric gradient of `f` at `params` by central differences with step `h`.
/// `params` is restored to its original values before returning.
pub fn finite_difference(params: &mut [Tensor], h: f64, mut f: impl FnMut(&[Tensor]) -> f64) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = params.iter().map(Tensor::zeros_like).collect();
    for i in 0..params.len() {
        for k in 0..params[i].len() {
            let orig = params[i].data()[k];
            params[i].data_mut()[k] = orig + h;
            let up = f(params);
            params[i].data_mut()[k] = orig - h;
            let down = f(params);
            params[i].data_mut()[k] = orig;
            out[i].data_mut()[k] = (up - down) / (2.0 * h);
        }
    }
    out
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries.
///
/// The floor keeps entries whose true gradient is zero (or nearly so) from
/// turning finite-difference rounding noise into huge relative errors.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert!(a.same_shape(n));
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
