//! Adaptive-moment optimizer with bias correction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::tensor::Tensor;

/// Gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub first: Tensor,
    pub second: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub moments: BTreeMap<String, Moments>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            moments: BTreeMap::new(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One update of every parameter that has a gradient. Parameters without a
/// gradient are left alone. `grads` is empty afterwards.
pub fn optimizer_step(params: &mut ModelParameters, grads: &mut Gradients, state: &mut OptimizerState) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Training(format!("gradient for unknown parameter `{name}`")))?;
        if p.shape() != g.shape() {
            return Err(Error::dim(format!(
                "gradient of `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::Training(format!("non-finite gradient for parameter `{name}`")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, g) in std::mem::take(grads) {
        let m = state.moments.entry(name.clone()).or_insert_with(|| Moments {
            first: Tensor::zeros(g.shape()),
            second: Tensor::zeros(g.shape()),
        });
        let p = params.get_mut(&name).expect("checked above");
        let (first, second) = (m.first.data_mut(), m.second.data_mut());
        for (i, (w, gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            first[i] = b1 * first[i] + (1.0 - b1) * gi;
            second[i] = b2 * second[i] + (1.0 - b2) * gi * gi;
            let m_hat = first[i] / c1;
            let v_hat = second[i] / c2;
            *w -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
