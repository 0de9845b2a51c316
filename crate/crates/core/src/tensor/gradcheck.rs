use thiserror::Error;

use super::Tensor;

#[derive(Debug, Error)]
pub enum GradientError {
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("objective returned a non-finite value at parameter {param}, coordinate {coord}")]
    NonFinite { param: usize, coord: usize },
    #[error("objective failed: {0}")]
    Objective(String),
}

/// Central-difference gradient of `f` at `params`, one tensor per parameter.
///
/// Each coordinate is perturbed by `±eps` in turn; the result is
/// `(f(p + eps e) - f(p - eps e)) / (2 eps)`.
pub fn finite_difference_gradient<F, E>(
    mut f: F,
    params: &[Tensor<f64>],
    eps: f64,
) -> Result<Vec<Tensor<f64>>, GradientError>
where
    F: FnMut(&[Tensor<f64>]) -> Result<f64, E>,
    E: std::fmt::Display,
{
    if !(eps > 0.0) {
        return Err(GradientError::BadStep(eps));
    }
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut eval = |work: &[Tensor<f64>], param: usize, coord: usize| -> Result<f64, GradientError> {
        let v = f(work).map_err(|e| GradientError::Objective(e.to_string()))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GradientError::NonFinite { param, coord })
        }
    };
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = Tensor::zeros(params[p].shape().to_vec());
        for c in 0..params[p].len() {
            let orig = work[p].data()[c];
            work[p].data_mut()[c] = orig + eps;
            let up = eval(&work, p, c)?;
            work[p].data_mut()[c] = orig - eps;
            let down = eval(&work, p, c)?;
            work[p].data_mut()[c] = orig;
            grad.data_mut()[c] = (up - down) / (2.0 * eps);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Worst-case disagreement between an analytic and a numeric gradient.
///
/// Coordinates whose analytic magnitude is below `small` are compared by
/// absolute error (reported separately); all others by relative error
/// `|a - n| / max(|a|, |n|)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    pub coords: usize,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_err <= rel_tol && self.max_abs_err_small <= abs_tol
    }
}

pub fn max_gradient_error(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>], small: f64) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lists differ in length");
    let mut report = GradCheckReport::default();
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape(), "gradient shapes differ");
        for (&x, &y) in a.data().iter().zip(n.data()) {
            report.coords += 1;
            let diff = (x - y).abs();
            if x.abs() < small {
                report.max_abs_err_small = report.max_abs_err_small.max(diff);
            } else {
                report.max_rel_err = report.max_rel_err.max(diff / x.abs().max(y.abs()));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_gradient() {
        for eps in [1e-2, 1e-4, 1e-6] {
            let g = finite_difference_gradient(
                |p: &[Tensor<f64>]| Ok::<_, String>(p[0].item()),
                &[Tensor::scalar(0.3)],
                eps,
            )
            .unwrap();
            assert!((g[0].item() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn square_at_three() {
        let g = finite_difference_gradient(
            |p: &[Tensor<f64>]| Ok::<_, String>(p[0].item() * p[0].item()),
            &[Tensor::scalar(3.0)],
            1e-4,
        )
        .unwrap();
        assert!((g[0].item() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        let f = |p: &[Tensor<f64>]| Ok::<_, String>(p[0].item());
        assert!(matches!(
            finite_difference_gradient(f, &[Tensor::scalar(1.0)], 0.0),
            Err(GradientError::BadStep(_))
        ));
        let g = |p: &[Tensor<f64>]| Ok::<_, String>(1.0 / (p[0].item() - 1e-4));
        assert!(matches!(
            finite_difference_gradient(g, &[Tensor::scalar(0.0)], 1e-4),
            Err(GradientError::NonFinite { .. })
        ));
    }
}
