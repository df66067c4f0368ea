//! Finite-difference gradient verification.
//!
//! Central differences at 64-bit give roughly 1e-9 relative accuracy for
//! well-scaled functions, which leaves plenty of headroom against the
//! 1e-4 tolerance used by the gradient suite.

/// Relative error between two scalars, falling back to absolute error
/// when both are near zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Central-difference gradient of a scalar function at `x`.
pub fn central_difference<F>(mut f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let original = probe[i];
            probe[i] = original + step;
            let forward = f(&probe);
            probe[i] = original - step;
            let backward = f(&probe);
            probe[i] = original;
            (forward - backward) / (2.0 * step)
        })
        .collect()
}

/// Worst relative error across an analytic/numeric gradient pair.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_matches_polynomial_derivative() {
        // f(x, y) = x^2 y + y^3, df/dx = 2xy, df/dy = x^2 + 3y^2
        let f = |v: &[f64]| v[0] * v[0] * v[1] + v[1] * v[1] * v[1];
        let x = [1.5, -0.7];
        let grad = central_difference(f, &x, 1e-5);
        let expected = [2.0 * 1.5 * -0.7, 1.5 * 1.5 + 3.0 * 0.7 * 0.7];
        assert!(max_relative_error(&expected, &grad) < 1e-8);
    }

    #[test]
    fn relative_error_handles_near_zero_pairs() {
        assert!(relative_error(0.0, 1e-12) < 1e-10);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
