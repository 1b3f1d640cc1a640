use crate::error::{FancError, Result};
use crate::numerics::Scalar;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport<T> {
    pub max_rel_error: T,
    /// Coordinate with the largest relative error.
    pub worst_index: Option<usize>,
    /// First coordinate at which `f` returned a non-finite value.
    pub non_finite_at: Option<usize>,
    pub numeric: Vec<T>,
    pub passed: bool,
}

/// Relative error with a `1e-8` floor on the denominator.
pub fn relative_error<T: Scalar>(analytic: T, numeric: T) -> T {
    let denom = analytic.abs().max(numeric.abs()).max(T::lit(1e-8));
    (analytic - numeric).abs() / denom
}

/// Checks `analytic` against `(f(p + step·e_i) − f(p − step·e_i)) / (2·step)`
/// for every coordinate `i`.
pub fn finite_difference_check<T, F>(
    mut f: F,
    params: &[T],
    analytic: &[T],
    step: T,
    tol: T,
) -> Result<FdReport<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
{
    if !(step > T::zero()) {
        return Err(FancError::contract("finite_difference_check", "step must be positive"));
    }
    if params.len() != analytic.len() {
        return Err(FancError::contract(
            "finite_difference_check",
            format!("{} parameters but {} gradient entries", params.len(), analytic.len()),
        ));
    }
    let mut p = params.to_vec();
    let mut numeric = Vec::with_capacity(p.len());
    let mut max_rel = T::zero();
    let mut worst = None;
    let two = T::lit(2.0);
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let plus = f(&p)?;
        p[i] = orig - step;
        let minus = f(&p)?;
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Ok(FdReport {
                max_rel_error: T::infinity(),
                worst_index: Some(i),
                non_finite_at: Some(i),
                numeric,
                passed: false,
            });
        }
        let n = (plus - minus) / (two * step);
        let rel = relative_error(analytic[i], n);
        if worst.is_none() || rel > max_rel {
            max_rel = rel;
            worst = Some(i);
        }
        numeric.push(n);
    }
    Ok(FdReport {
        max_rel_error: max_rel,
        worst_index: worst,
        non_finite_at: None,
        numeric,
        passed: max_rel <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_sq(p: &[f64]) -> Result<f64> {
        Ok(p.iter().map(|x| x * x).sum())
    }

    #[test]
    fn sum_of_squares_passes() {
        let r = finite_difference_check(sum_sq, &[1.0, 2.0], &[2.0, 4.0], 1e-6, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn constant_passes_with_zero_gradient() {
        let r = finite_difference_check(|_: &[f64]| Ok(7.0), &[1.0, 2.0], &[0.0, 0.0], 1e-6, 1e-6)
            .unwrap();
        assert!(r.passed);
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let r = finite_difference_check(sum_sq, &[1.0, 2.0], &[4.0, 8.0], 1e-6, 1e-4).unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_error > 0.4);
    }

    #[test]
    fn non_finite_value_is_reported_with_index() {
        let f = |p: &[f64]| Ok(if p[1] > 2.0 { f64::NAN } else { p[0] });
        let r = finite_difference_check(f, &[1.0, 2.0], &[1.0, 0.0], 1e-6, 1e-4).unwrap();
        assert!(!r.passed);
        assert_eq!(r.non_finite_at, Some(1));
    }
}
