//! Turning the data sections of a configuration into tables and model
//! configurations.

use std::path::Path;

use chrono::TimeDelta;
use multipatch::data::synthetic::WEEK;
use multipatch::data::{generate_synthetic, load_csv, Schema, SyntheticSpec, TimeSeriesTable, WindowSpec};
use multipatch::patching::{scale_specs_for, GENERIC_WINDOWS, HOURLY_WINDOWS};
use multipatch::ModelConfig;

use crate::config::{AblationToggles, CorpusDataset, ExperimentConfig};
use crate::{CliError, CliResult};

/// Problems with a synthetic spec that do not stop generation.
pub fn synth_warnings(spec: &SyntheticSpec) -> Vec<String> {
    let mut w = Vec::new();
    if spec.length < 2 * WEEK && spec.weekly_amplitude != 0.0 {
        w.push(format!(
            "series length {} is shorter than two weekly periods ({}); the weekly component is still applied",
            spec.length,
            2 * WEEK
        ));
    }
    w
}

pub fn synthetic_table(spec: &SyntheticSpec, seed: u64) -> TimeSeriesTable {
    for w in synth_warnings(spec) {
        log::warn!("{w}");
    }
    generate_synthetic(seed, spec)
}

/// The target series of the experiment.
pub fn target_table(cfg: &ExperimentConfig) -> CliResult<TimeSeriesTable> {
    match &cfg.data.path {
        Some(p) => Ok(load_csv(p, &cfg.data.schema())?),
        None => Ok(synthetic_table(&cfg.data.synthetic, cfg.seed)),
    }
}

pub fn dataset_name(cfg: &ExperimentConfig) -> String {
    match &cfg.data.path {
        Some(p) => stem(p),
        None => "synthetic".into(),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Pretraining dataset `index` (0-based).
pub fn corpus_table(cfg: &ExperimentConfig, ds: &CorpusDataset, index: usize) -> CliResult<TimeSeriesTable> {
    match (&ds.path, &ds.synthetic) {
        (Some(p), _) => {
            let schema = if ds.target.is_empty() {
                Schema::LastTargetRestFuture
            } else {
                Schema::explicit(&ds.target, &[] as &[String])
            };
            Ok(load_csv(p, &schema)?)
        }
        (None, Some(spec)) => {
            let seed = ds.seed.unwrap_or_else(|| cfg.seed.wrapping_add(index as u64 + 1));
            Ok(synthetic_table(spec, seed))
        }
        (None, None) => Err(CliError::Usage(format!("pretraining dataset {index} has no source"))),
    }
}

pub fn is_hourly(table: &TimeSeriesTable) -> bool {
    table.len() < 2 || table.step() == TimeDelta::hours(1)
}

pub fn window_spec(cfg: &ExperimentConfig, lookback: usize, horizon: usize) -> WindowSpec {
    WindowSpec {
        lookback,
        horizon,
        stride: cfg.data.stride,
        instance_norm: cfg.data.instance_norm,
    }
}

/// Model configuration for a table with `channels` targets and `future`
/// future-known channels, with the components selected by `toggles`.
pub fn model_config(
    cfg: &ExperimentConfig,
    channels: usize,
    future: usize,
    hourly: bool,
    toggles: &AblationToggles,
) -> CliResult<ModelConfig> {
    let m = &cfg.model;
    let (l, h) = (cfg.data.lookback, cfg.data.horizon);
    let windows = if !toggles.multi_scale {
        vec![1]
    } else if let Some(w) = &m.scale_windows {
        w.clone()
    } else if hourly {
        HOURLY_WINDOWS.to_vec()
    } else {
        GENERIC_WINDOWS.to_vec()
    };
    let mc = ModelConfig {
        lookback: l,
        horizon: h,
        channels,
        future_channels: if toggles.future_variables { future } else { 0 },
        scales: scale_specs_for(l, &windows, m.max_patch),
        d_model: m.d_model,
        n_heads: m.n_heads,
        n_layers: m.n_layers,
        ff_dim: m.ff_dim,
        dropout: m.dropout,
        nll_weight: if toggles.mc_dropout { m.nll_weight } else { 0.0 },
        variance_floor: m.variance_floor,
    };
    mc.validate().map_err(|e| CliError::Usage(format!("model: {e}")))?;
    Ok(mc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_weekly_series_warns() {
        let spec = SyntheticSpec {
            length: 100,
            ..Default::default()
        };
        let w = synth_warnings(&spec);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("336"), "{}", w[0]);
        // amplitude is kept
        let t = synthetic_table(&spec, 1);
        let flat = generate_synthetic(1, &SyntheticSpec {
            weekly_amplitude: 0.0,
            ..spec.clone()
        });
        assert_ne!(t.target(0), flat.target(0));
        assert!(synth_warnings(&SyntheticSpec {
            weekly_amplitude: 0.0,
            ..spec
        })
        .is_empty());
        assert!(synth_warnings(&SyntheticSpec::default()).is_empty());
    }

    #[test]
    fn toggles_shape_the_model() {
        let mut cfg = ExperimentConfig::default();
        cfg.data.lookback = 48;
        cfg.data.horizon = 12;
        cfg.model.scale_windows = Some(vec![1, 4, 12]);
        let all = AblationToggles::default();
        let full = model_config(&cfg, 1, 1, true, &all).unwrap();
        assert_eq!(full.n_scales(), 3);
        assert_eq!(full.future_channels, 1);
        assert_eq!(full.nll_weight, 0.5);

        let one = model_config(&cfg, 1, 1, true, &AblationToggles { multi_scale: false, ..all }).unwrap();
        assert_eq!(one.scales.len(), 1);
        assert_eq!(one.scales[0].window, 1);
        assert_eq!(one.scales[0], full.scales[0]);

        let nf = model_config(&cfg, 1, 1, true, &AblationToggles { future_variables: false, ..all }).unwrap();
        assert_eq!(nf.future_channels, 0);
        let nu = model_config(&cfg, 1, 1, true, &AblationToggles { mc_dropout: false, ..all }).unwrap();
        assert_eq!(nu.nll_weight, 0.0);
        assert_eq!(cfg.eval_options(&AblationToggles { mc_dropout: false, ..all }).mc_samples, 0);

        cfg.model.n_heads = 5;
        assert!(matches!(model_config(&cfg, 1, 1, true, &all), Err(CliError::Usage(_))));
    }
}
