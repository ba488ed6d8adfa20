use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patching::{default_scale_specs, ScaleSpec};

/// Hyperparameters of the forecaster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    /// Target channels `D`.
    pub channels: usize,
    /// Future-known channels `E`; zero disables the future pathway.
    pub future_channels: usize,
    pub scales: Vec<ScaleSpec>,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Weight of the Gaussian NLL term in the training loss.
    pub nll_weight: f64,
    /// Lower bound added to every predicted variance.
    pub variance_floor: f64,
}

impl ModelConfig {
    /// Defaults sized for desk-scale training with the three hourly scales.
    pub fn new(lookback: usize, horizon: usize, channels: usize, future_channels: usize) -> Self {
        Self {
            lookback,
            horizon,
            channels,
            future_channels,
            scales: default_scale_specs(lookback, true),
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            ff_dim: 128,
            dropout: 0.1,
            nll_weight: 0.5,
            variance_floor: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::param(m));
        if self.lookback == 0 || self.horizon == 0 || self.channels == 0 {
            return bad("lookback, horizon and channel count must be positive".into());
        }
        if self.scales.is_empty() {
            return bad("at least one scale is required".into());
        }
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.ff_dim == 0 {
            return bad("d_model, n_heads, n_layers and ff_dim must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.variance_floor > 0.0) {
            return bad(format!("variance floor {} must be positive", self.variance_floor));
        }
        if !(self.nll_weight >= 0.0) {
            return bad(format!("NLL weight {} must be non-negative", self.nll_weight));
        }
        for (i, s) in self.scales.iter().enumerate() {
            s.validate(self.lookback, i)?;
        }
        Ok(())
    }

    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn n_patches(&self, scale: usize) -> usize {
        self.scales[scale].n_patches(self.lookback)
    }

    pub fn has_future(&self) -> bool {
        self.future_channels > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::new(336, 96, 1, 1).validate().unwrap();
    }

    #[test]
    fn rejects_invalid() {
        let base = ModelConfig::new(336, 96, 1, 1);
        let cases: Vec<Box<dyn Fn(&mut ModelConfig)>> = vec![
            Box::new(|c| c.n_heads = 3),
            Box::new(|c| c.dropout = 1.0),
            Box::new(|c| c.variance_floor = 0.0),
            Box::new(|c| c.nll_weight = -0.1),
            Box::new(|c| c.scales.clear()),
            Box::new(|c| c.scales[0].patch_len = 400),
            Box::new(|c| c.horizon = 0),
        ];
        for f in cases {
            let mut c = base.clone();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Parameter(_))), "{c:?}");
        }
    }
}
