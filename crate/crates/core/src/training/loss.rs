//! Training objectives.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn same_shape(g: &Graph, a: Var, b: Var, what: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::dim(format!(
            "{what}: target shape {:?} does not match forecast shape {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok(())
}

/// Mean squared error over every entry.
pub fn mse_loss(g: &mut Graph, y: Var, y_hat: Var) -> Result<Var> {
    same_shape(g, y, y_hat, "mse")?;
    let e = g.sub(y_hat, y)?;
    let sq = g.square(e);
    Ok(g.mean(sq))
}

/// Gaussian negative log-likelihood per entry, `log(σ²)/2 + (y − ŷ)²/(2σ²)`,
/// averaged over all entries. The constant `log(2π)/2` is left out.
pub fn nll_loss(g: &mut Graph, y: Var, y_hat: Var, var: Var) -> Result<Var> {
    same_shape(g, y, y_hat, "nll")?;
    same_shape(g, y, var, "nll variance")?;
    if let Some(v) = g.value(var).data().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::domain(format!("nll requires positive variance, got {v}")));
    }
    let log_var = g.log(var)?;
    let e = g.sub(y, y_hat)?;
    let sq = g.square(e);
    let ratio = g.div(sq, var)?;
    let total = g.add(log_var, ratio)?;
    let m = g.mean(total);
    Ok(g.scale(m, 0.5))
}

/// `mse + λ·nll`.
pub fn combined_loss(g: &mut Graph, y: Var, y_hat: Var, var: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("loss weight must be non-negative, got {lambda}")));
    }
    let mse = mse_loss(g, y, y_hat)?;
    if lambda == 0.0 {
        return Ok(mse);
    }
    let nll = nll_loss(g, y, y_hat, var)?;
    let w = g.scale(nll, lambda);
    g.add(mse, w)
}

/// Value-only helpers for reporting.
pub fn mse_value(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(y.clone()), g.constant(y_hat.clone()));
    let l = mse_loss(&mut g, a, b)?;
    Ok(g.value(l).item())
}

pub fn nll_value(y: &Tensor, y_hat: &Tensor, var: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let (a, b, v) = (g.constant(y.clone()), g.constant(y_hat.clone()), g.constant(var.clone()));
    let l = nll_loss(&mut g, a, b, v)?;
    Ok(g.value(l).item())
}

pub fn combined_value(y: &Tensor, y_hat: &Tensor, var: &Tensor, lambda: f64) -> Result<f64> {
    let mut g = Graph::new();
    let (a, b, v) = (g.constant(y.clone()), g.constant(y_hat.clone()), g.constant(var.clone()));
    let l = combined_loss(&mut g, a, b, v, lambda)?;
    Ok(g.value(l).item())
}
