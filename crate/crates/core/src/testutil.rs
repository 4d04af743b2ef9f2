//! Finite-difference oracle shared by unit tests.

use crate::tensor::Tensor;

/// Central differences of scalar `f` at `x0`, one coordinate at a time.
pub fn central_diff(x0: &Tensor, h: f64, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut out = Tensor::zeros(x0.rows(), x0.cols());
    let mut x = x0.clone();
    for k in 0..x0.len() {
        let orig = x.data()[k];
        x.data_mut()[k] = orig + h;
        let plus = f(&x);
        x.data_mut()[k] = orig - h;
        let minus = f(&x);
        x.data_mut()[k] = orig;
        out.data_mut()[k] = (plus - minus) / (2.0 * h);
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)` over the whole tensor, using norms.
pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let diff = a.zip_map(b, |x, y| x - y).sq_norm().sqrt();
    let scale = a.sq_norm().sqrt().max(b.sq_norm().sqrt()).max(1e-8);
    diff / scale
}
