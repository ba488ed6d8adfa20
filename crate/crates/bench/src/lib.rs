//! Fixtures shared by the benchmarks.

use multipatch::data::{generate_synthetic, prepare, PreparedData, SyntheticSpec, WindowSpec, DEFAULT_SPLIT};
use multipatch::patching::scale_specs_for;
use multipatch::ModelConfig;

/// Hourly configuration with the three default scales and one future channel.
pub fn config(lookback: usize, horizon: usize, d_model: usize) -> ModelConfig {
    ModelConfig {
        scales: scale_specs_for(lookback, &[1, 24, 168], 16),
        d_model,
        n_heads: 2,
        n_layers: 1,
        ff_dim: 2 * d_model,
        ..ModelConfig::new(lookback, horizon, 1, 1)
    }
}

pub fn data(cfg: &ModelConfig, length: usize) -> PreparedData {
    let table = generate_synthetic(
        7,
        &SyntheticSpec {
            length,
            driver_coef: 0.5,
            ..Default::default()
        },
    );
    prepare(&table, WindowSpec::new(cfg.lookback, cfg.horizon), DEFAULT_SPLIT, false).expect("series long enough")
}
