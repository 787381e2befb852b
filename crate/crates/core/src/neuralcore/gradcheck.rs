use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_GRADCHECK_STEP: f64 = 1e-3;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} evaluated to {v}")))
    }
}

/// Maximum relative error between the analytic gradient and central
/// differences over every coordinate of `input`.
///
/// `f` returns the function value and its analytic gradient (same shape as
/// the input). The error per coordinate is `|a − c| / max(1, |a|, |c|)`.
pub fn finite_diff_gradcheck<F>(f: F, input: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    let coords: Vec<usize> = (0..input.len()).collect();
    finite_diff_gradcheck_at(f, input, step, &coords)
}

/// Like [`finite_diff_gradcheck`] but only probes the listed coordinates.
pub fn finite_diff_gradcheck_at<F>(f: F, input: &Tensor<f64>, step: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Validation(format!("gradcheck step must be positive, got {step}")));
    }
    let (v0, grad) = f(input);
    finite(v0, "function")?;
    if grad.shape() != input.shape() {
        return Err(Error::Shape(format!("gradient shape {:?} vs input {:?}", grad.shape(), input.shape())));
    }
    let mut worst = 0.0f64;
    let mut probe = input.clone();
    for &i in coords {
        let a = finite(grad.data()[i], "analytic gradient")?;
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = finite(f(&probe).0, "function")?;
        probe.data_mut()[i] = orig - step;
        let down = finite(f(&probe).0, "function")?;
        probe.data_mut()[i] = orig;
        worst = worst.max(relative_error(a, (up - down) / (2.0 * step)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact() {
        let x = Tensor::new(vec![5], vec![0.3, -1.2, 4.0, 0.0, 7.5]).unwrap();
        let err = finite_diff_gradcheck(|x| (x.sum_sq(), x.map(|v| 2.0 * v)), &x, DEFAULT_GRADCHECK_STEP).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let err = finite_diff_gradcheck(|x| (x.sum_sq(), x.map(|v| v)), &x, 1e-4).unwrap();
        assert!(err > 0.4);
    }

    #[test]
    fn non_finite_is_an_error() {
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        let r = finite_diff_gradcheck(|x| (1.0 / x.data()[0], x.clone()), &x, 1e-3);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
