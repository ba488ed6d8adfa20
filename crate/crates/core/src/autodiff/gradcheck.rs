use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of comparing autodiff gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub passed: bool,
}

/// Relative error with a small absolute floor so that two gradients which
/// are both zero up to rounding compare equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Checks the gradient of the scalar function `f` at `x` coordinate by
/// coordinate using `(f(x + h) - f(x - h)) / 2h`.
pub fn gradient_check<F>(f: F, x: &Tensor, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |point: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(point.clone());
        let out = f(&mut g, v)?;
        if g.value(out).numel() != 1 {
            return Err(Error::dim("gradient check needs a scalar function"));
        }
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let v = g.variable(x.clone());
    let out = f(&mut g, v)?;
    g.backward(out)?;
    let analytic = g.grad(v).expect("variable").into_data();

    let mut numeric = Vec::with_capacity(x.numel());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * step));
    }

    let mut max_abs_error = 0.0f64;
    let mut max_rel_error = 0.0f64;
    let mut worst_index = 0;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        max_abs_error = max_abs_error.max((a - n).abs());
        let rel = relative_error(*a, *n);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_abs_error,
        max_rel_error,
        worst_index,
        passed: max_rel_error <= tolerance,
    })
}
