//! Central finite differences, used as an independent oracle for gradients.

use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function of one tensor.
pub fn numerical_gradient(x: &Tensor, step: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    out
}

/// `max |a - b| / max(max |b|, floor)`: the worst deviation relative to the
/// scale of the reference gradient.
pub fn relative_error(analytic: &Tensor, reference: &Tensor, floor: f64) -> f64 {
    analytic.max_abs_diff(reference) / reference.max_abs().max(floor)
}
