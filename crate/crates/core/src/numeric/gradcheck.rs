//! Central finite differences, the independent oracle for every analytic
//! gradient in the crate.

use super::matrix::{l2_norm, Matrix};
use super::params::ParamStore;

pub const DEFAULT_STEP: f64 = 1e-5;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_vec(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference gradient of `loss_fn` for every value in `params`,
/// one matrix per segment.
pub fn finite_diff_grad(mut loss_fn: impl FnMut(&ParamStore) -> f64, params: &ParamStore, h: f64) -> Vec<Matrix> {
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for s in 0..params.len() {
        let (rows, cols) = params.segment(s).values.shape();
        let mut grad = Matrix::zeros(rows, cols);
        for i in 0..rows * cols {
            let orig = probe.segment(s).values.as_slice()[i];
            probe.segment_mut(s).values.as_mut_slice()[i] = orig + h;
            let up = loss_fn(&probe);
            probe.segment_mut(s).values.as_mut_slice()[i] = orig - h;
            let down = loss_fn(&probe);
            probe.segment_mut(s).values.as_mut_slice()[i] = orig;
            grad.as_mut_slice()[i] = (up - down) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, falling back to the absolute difference when
/// both vectors are essentially zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error length mismatch");
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let num = l2_norm(&diff);
    let denom = l2_norm(a).max(l2_norm(b));
    if denom < 1e-10 {
        num
    } else {
        num / denom
    }
}
