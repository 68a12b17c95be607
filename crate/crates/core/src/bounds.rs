//! Closed-form time and message bounds of the election as functions of the
//! growth factor `X` and the node count. Logarithms are base 2.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("growth factor must be a finite number > 1, got {0}")]
    GrowthFactor(f64),
    #[error("node count must be at least 1")]
    NoNodes,
}

fn check(x: f64, n: usize) -> Result<(), BoundError> {
    if !(x.is_finite() && x > 1.0) {
        return Err(BoundError::GrowthFactor(x));
    }
    if n == 0 {
        return Err(BoundError::NoNodes);
    }
    Ok(())
}

/// `(X^2 + 3X) / (X - 1)`, the per-node time factor.
pub fn time_factor(x: f64) -> Result<f64, BoundError> {
    check(x, 1)?;
    Ok((x * x + 3.0 * x) / (x - 1.0))
}

/// Time units to elect a leader after initialization.
pub fn time_bound(x: f64, n: usize) -> Result<f64, BoundError> {
    Ok(time_factor(x)? * n as f64)
}

/// Work periods a cluster goes through in the slowest growth schedule:
/// `(lg n - lg(1 + X)) / lg((X + 1) / X) + 1`.
pub fn work_periods(x: f64, n: usize) -> Result<f64, BoundError> {
    check(x, n)?;
    let n = n as f64;
    Ok((n.log2() - (1.0 + x).log2()) / ((x + 1.0) / x).log2() + 1.0)
}

/// Transmissions after initialization, never below `n`.
pub fn message_bound(x: f64, n: usize) -> Result<f64, BoundError> {
    Ok((work_periods(x, n)? * n as f64).max(n as f64))
}

/// The growth factor minimizing [`time_factor`].
///
/// The derivative's numerator is `X^2 - 2X - 3 = (X - 3)(X + 1)`, so the
/// minimum over `X > 1` sits at `1 + sqrt(4)`.
pub fn optimal_x() -> f64 {
    let x = 1.0 + 4.0f64.sqrt();
    debug_assert!((minimize_time_factor(1.0 + 1e-9, 100.0, 1e-10) - x).abs() < 1e-6);
    x
}

/// Golden-section search for the minimum of [`time_factor`] on `[lo, hi]`.
pub fn minimize_time_factor(mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let f = |x: f64| (x * x + 3.0 * x) / (x - 1.0);
    let ratio = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_bound_values() {
        assert_eq!(time_bound(3.0, 1).unwrap(), 9.0);
        assert_eq!(time_bound(3.0, 100).unwrap(), 900.0);
        assert_eq!(time_bound(2.0, 10).unwrap(), 100.0);
    }

    #[test]
    fn message_bound_values() {
        // lg 4 = lg(1 + 3): exactly one period
        assert_eq!(message_bound(3.0, 4).unwrap(), 4.0);
        assert!((message_bound(3.0, 8).unwrap() - 27.275).abs() < 1e-3);
        assert!((message_bound(3.0, 64).unwrap() - 680.81).abs() < 1e-2);
        assert_eq!(message_bound(3.0, 1).unwrap(), 1.0);
    }

    #[test]
    fn rejects_small_growth_factor() {
        assert_eq!(time_bound(1.0, 5), Err(BoundError::GrowthFactor(1.0)));
        assert!(message_bound(0.5, 5).is_err());
        assert!(time_factor(f64::NAN).is_err());
        assert_eq!(message_bound(2.0, 0), Err(BoundError::NoNodes));
    }

    #[test]
    fn three_minimizes_time() {
        assert_eq!(optimal_x(), 3.0);
        assert_eq!(time_factor(3.0).unwrap(), 9.0);
        assert!(time_factor(2.0).unwrap() > 9.0);
        assert!(time_factor(4.0).unwrap() > 9.0);
        assert!((minimize_time_factor(1.01, 50.0, 1e-9) - 3.0).abs() < 1e-5);
    }
}
