use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TestkitError {
    #[error("function value is not finite at coordinate {coordinate}")]
    NonFiniteFunctionValue { coordinate: usize },
    #[error("gradient length mismatch: analytic {analytic}, numeric {numeric}")]
    LengthMismatch { analytic: usize, numeric: usize },
}

/// Default relative step for central differences at 64-bit precision.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Default relative tolerance for gradient agreement.
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Absolute differences below this are treated as agreement.
pub const ABSOLUTE_FLOOR: f64 = 1e-8;

/// Central-difference estimate of the gradient of `f` at `x`.
///
/// Coordinate `i` is perturbed by `h = step * max(1, |x_i|)`.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>, TestkitError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(TestkitError::NonFiniteFunctionValue { coordinate: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Outcome of comparing an analytic gradient against a numeric one.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub label: String,
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub tolerance: f64,
    pub probed: usize,
    pub pass: bool,
}

/// Per-coordinate error: zero when the absolute difference is under
/// [`ABSOLUTE_FLOOR`], otherwise `|a - n| / max(|a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABSOLUTE_FLOOR {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

pub fn check_gradient(
    label: impl Into<String>,
    analytic: &[f64],
    numeric: &[f64],
    tolerance: f64,
) -> Result<GradCheckReport, TestkitError> {
    if analytic.len() != numeric.len() {
        return Err(TestkitError::LengthMismatch {
            analytic: analytic.len(),
            numeric: numeric.len(),
        });
    }
    let mut worst = 0.0;
    let mut worst_index = None;
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = relative_error(a, n);
        if e > worst || worst_index.is_none() {
            worst = e;
            worst_index = Some(i);
        }
    }
    Ok(GradCheckReport {
        label: label.into(),
        max_relative_error: worst,
        worst_index,
        tolerance,
        probed: analytic.len(),
        pass: worst < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let g = finite_diff_gradient(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], DEFAULT_STEP)
            .unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff_gradient(|_| 3.5, &[0.3, -7.0, 1e3], DEFAULT_STEP).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_is_reported() {
        let err = finite_diff_gradient(|x| (x[0] - 1.0).ln(), &[1.0], DEFAULT_STEP);
        assert_eq!(err, Err(TestkitError::NonFiniteFunctionValue { coordinate: 0 }));
    }

    #[test]
    fn report_pass_flag_matches_tolerance() {
        let r = check_gradient("x", &[1.0, 2.0], &[1.0, 2.0 + 1e-3], 1e-5).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_index, Some(1));
        let r = check_gradient("x", &[1.0, 1e-12], &[1.0, 0.0], 1e-5).unwrap();
        assert!(r.pass);
    }
}
