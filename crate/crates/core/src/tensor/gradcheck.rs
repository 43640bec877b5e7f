//! Central finite differences, the reference for every analytic gradient.

use super::{ParamId, ParamStore};

pub const DEFAULT_EPS: f64 = 1e-5;

/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], index: usize, eps: f64) -> f64 {
    assert!(eps > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    probe[index] = x[index] + eps;
    let plus = f(&probe);
    probe[index] = x[index] - eps;
    let minus = f(&probe);
    (plus - minus) / (2.0 * eps)
}

/// Numeric gradient of `f` for each sampled `(parameter, flat index)` entry.
/// Each entry is restored to its original value afterwards.
pub fn finite_diff_grad(
    mut f: impl FnMut(&ParamStore) -> f64,
    store: &mut ParamStore,
    entries: &[(ParamId, usize)],
    eps: f64,
) -> Vec<f64> {
    assert!(eps > 0.0, "finite-difference step must be positive");
    entries
        .iter()
        .map(|&(id, i)| {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + eps;
            let plus = f(store);
            store.get_mut(id).value.data_mut()[i] = orig - eps;
            let minus = f(store);
            store.get_mut(id).value.data_mut()[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Acceptance rule: relative error against `rel` when the reference magnitude
/// is at least `small`, absolute error against `abs` below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub small: f64,
}

impl Tolerance {
    pub const OPS: Tolerance = Tolerance { rel: 1e-4, abs: 1e-7, small: 1e-4 };
    pub const MODEL: Tolerance = Tolerance { rel: 1e-3, abs: 1e-7, small: 1e-4 };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    /// `abs_err / max(|analytic|, |numeric|)`, or 0 when both vanish.
    pub rel_err: f64,
    pub small: bool,
    pub pass: bool,
}

pub fn compare(analytic: f64, numeric: f64, tol: Tolerance) -> Comparison {
    let abs_err = (analytic - numeric).abs();
    let mag = analytic.abs().max(numeric.abs());
    let rel_err = if mag == 0.0 { 0.0 } else { abs_err / mag };
    let small = mag < tol.small;
    let pass = if small { abs_err <= tol.abs } else { rel_err <= tol.rel };
    Comparison { analytic, numeric, abs_err, rel_err, small, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let d = central_difference(|x| x[0] * x[0], &[3.0], 0, DEFAULT_EPS);
        assert!((d - 6.0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_at_zero() {
        let d = central_difference(|x| 1.0 / (1.0 + (-x[0]).exp()), &[0.0], 0, DEFAULT_EPS);
        assert!((d - 0.25).abs() < 1e-9);
    }

    #[test]
    fn tolerance_switches_to_absolute_for_tiny_references() {
        assert!(compare(1e-6, 1.05e-6, Tolerance::OPS).pass);
        assert!(!compare(1.0, 1.001, Tolerance::OPS).pass);
        assert!(compare(1.0, 1.00001, Tolerance::OPS).pass);
    }
}
