//! The multi-scale patch forecaster.

mod config;
mod network;
mod params;

pub use config::ModelConfig;
pub use network::{
    encode_scale, forward, forward_graph, fuse_and_head, project_future, Bindings, ForwardOptions,
};
pub use params::{
    adapt_parameters, expected_shapes, init_model, is_encoder_param, is_future_param, ModelParameters,
};

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Per-step Gaussian forecast: `H × D` means and variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianForecast {
    pub mean: Tensor,
    pub variance: Tensor,
}

#[cfg(test)]
pub(crate) mod testing {
    use super::ModelConfig;
    use crate::data::{InstanceStats, WindowSample};
    use crate::patching::ScaleSpec;
    use crate::rng;
    use crate::tensor::Tensor;
    use rand::Rng as _;

    pub fn micro() -> ModelConfig {
        ModelConfig {
            lookback: 8,
            horizon: 2,
            channels: 1,
            future_channels: 1,
            scales: vec![ScaleSpec {
                window: 1,
                patch_len: 4,
                stride: 2,
            }],
            d_model: 8,
            n_heads: 1,
            n_layers: 1,
            ff_dim: 16,
            dropout: 0.1,
            nll_weight: 0.5,
            variance_floor: 1e-6,
        }
    }

    /// Two scales, two heads, two channels.
    pub fn small() -> ModelConfig {
        ModelConfig {
            lookback: 24,
            horizon: 4,
            channels: 2,
            future_channels: 2,
            scales: vec![
                ScaleSpec {
                    window: 1,
                    patch_len: 6,
                    stride: 3,
                },
                ScaleSpec {
                    window: 4,
                    patch_len: 3,
                    stride: 1,
                },
            ],
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            ff_dim: 12,
            dropout: 0.2,
            nll_weight: 0.5,
            variance_floor: 1e-6,
        }
    }

    pub fn random_sample(cfg: &ModelConfig, seed: u64) -> WindowSample {
        let mut r = rng::seeded(seed);
        let mut t = |rows: usize, cols: usize| {
            Tensor::new(
                vec![rows, cols],
                (0..rows * cols).map(|_| r.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap()
        };
        let x = t(cfg.lookback, cfg.channels);
        let y = t(cfg.horizon, cfg.channels);
        let z = (cfg.future_channels > 0).then(|| t(cfg.horizon, cfg.future_channels));
        WindowSample {
            start: 0,
            x,
            z,
            y,
            instance: InstanceStats::identity(cfg.channels),
        }
    }
}
