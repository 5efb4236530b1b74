//! Central finite-difference checks against analytic gradients.

use alloc::vec::Vec;

use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitude below which errors are measured absolutely rather than relative
/// to the gradient size.
pub const ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

pub fn central_difference(value: &mut f64, step: f64, mut f: impl FnMut() -> f64) -> f64 {
    let orig = *value;
    *value = orig + step;
    let plus = f();
    *value = orig - step;
    let minus = f();
    *value = orig;
    (plus - minus) / (2.0 * step)
}

/// Smallest step tried when a kink is detected.
pub const MIN_STEP: f64 = 1e-8;

/// One-sided slopes disagreeing by more than this (relative) mean the
/// function is not smooth within the step.
pub const KINK_RATIO: f64 = 1e-3;

/// Central difference of `eval(delta) = f(x + delta)` given `f0 = f(x)`.
///
/// When the forward and backward slopes disagree, a ReLU or `|.|` kink may
/// lie inside `[x - step, x + step]`. The step then shrinks tenfold for as
/// long as the disagreement keeps falling at least fivefold, stopping once
/// roundoff dominates or [`MIN_STEP`] is reached.
pub fn smooth_difference(f0: f64, step: f64, mut eval: impl FnMut(f64) -> f64) -> f64 {
    let mut probe = |h: f64| {
        let plus = eval(h);
        let minus = eval(-h);
        let fwd = (plus - f0) / h;
        let bwd = (f0 - minus) / h;
        ((plus - minus) / (2.0 * h), (fwd - bwd).abs(), fwd.abs().max(bwd.abs()))
    };
    let (mut best, mut mismatch, scale) = probe(step);
    if mismatch <= KINK_RATIO * scale.max(ERROR_FLOOR) {
        return best;
    }
    let mut h = step / 10.0;
    while h >= MIN_STEP {
        let (est, mis, _) = probe(h);
        if mis * 5.0 > mismatch {
            break;
        }
        best = est;
        mismatch = mis;
        h /= 10.0;
    }
    best
}

/// Largest relative error between `analytic` and finite differences of `f`
/// taken with respect to every element of `x`.
pub fn check_input(x: &Tensor, analytic: &Tensor, step: f64, mut f: impl FnMut(&Tensor) -> f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut probe = x.clone();
    let f0 = f(&probe);
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        let numeric = smooth_difference(f0, step, |d| {
            probe.data_mut()[i] = orig + d;
            let v = f(&probe);
            probe.data_mut()[i] = orig;
            v
        });
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    worst
}

/// Same as [`check_input`] for parameters held in a store.
pub fn check_params(
    ps: &mut ParamStore,
    ids: &[ParamId],
    grads: &Grads,
    step: f64,
    mut f: impl FnMut(&ParamStore) -> f64,
) -> f64 {
    let f0 = f(ps);
    let mut worst = 0.0f64;
    for &id in ids {
        let analytic: Vec<f64> = grads.get(id).expect("trainable parameter").to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = ps.get(id).data()[i];
            let numeric = smooth_difference(f0, step, |d| {
                ps.get_mut(id).data_mut()[i] = orig + d;
                let v = f(ps);
                ps.get_mut(id).data_mut()[i] = orig;
                v
            });
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}

/// Ids of every trainable entry in the store.
pub fn trainable_ids(ps: &ParamStore) -> Vec<ParamId> {
    ps.ids()
        .filter(|&id| ps.entry(id).role == crate::params::Role::Trainable)
        .collect()
}
