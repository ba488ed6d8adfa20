//! Forecasting over a split and summarizing accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mc::{mc_forecast, mixture_interval, prediction_interval, MCForecast, PredictionInterval, DEFAULT_MC_SAMPLES};
use super::metrics::{crps_gaussian, crps_mixture, pi_coverage, point_metrics, MetricReport, Units};
use crate::data::{denormalize_forecast, NormalizationStats, WindowSample};
use crate::error::{Error, Result};
use crate::model::{forward, ForwardOptions, ModelConfig, ModelParameters};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMethod {
    /// `mean ± z·σ` from the combined Gaussian.
    Gaussian,
    /// Quantiles of the mixture of per-pass Gaussians.
    Mixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrpsMethod {
    Gaussian,
    Mixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Leading forecast steps to score; `None` scores the model's horizon.
    pub horizon: Option<usize>,
    /// Monte Carlo passes; below 2 means one deterministic pass.
    pub mc_samples: usize,
    pub seed: u64,
    pub level: f64,
    pub units: Units,
    pub interval: IntervalMethod,
    pub crps: CrpsMethod,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            level: 0.95,
            units: Units::Normalized,
            interval: IntervalMethod::Gaussian,
            crps: CrpsMethod::Gaussian,
        }
    }
}

/// Forecast of one window in reporting units.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowForecast {
    pub mean: Tensor,
    pub variance: Tensor,
    pub interval: PredictionInterval,
    /// Per-pass means and variances in reporting units (empty for a
    /// deterministic pass).
    pub passes: Option<MCForecast>,
}

fn head_rows(t: &Tensor, h: usize) -> Tensor {
    let d = t.shape()[1];
    Tensor::new(vec![h, d], t.data()[..h * d].to_vec()).expect("h ≤ rows")
}

fn to_units(
    mean: &Tensor,
    var: &Tensor,
    sample: &WindowSample,
    stats: &NormalizationStats,
    units: Units,
    h: usize,
) -> Result<(Tensor, Tensor)> {
    let global = match units {
        Units::Normalized => NormalizationStats::identity(sample.channels(), 0),
        Units::Original => stats.clone(),
    };
    let (m, v) = denormalize_forecast(mean, var, &global, &sample.instance)?;
    Ok((head_rows(&m, h), head_rows(&v, h)))
}

/// Targets of `sample` in reporting units, first `h` steps.
pub fn target_in_units(sample: &WindowSample, stats: &NormalizationStats, units: Units, h: usize) -> Tensor {
    let mut y = head_rows(&sample.y, h);
    if units == Units::Original {
        let d = sample.channels();
        for (k, v) in y.data_mut().iter_mut().enumerate() {
            *v = stats.target[k % d].denormalize(*v);
        }
    }
    y
}

fn resolve_horizon(cfg: &ModelConfig, opts: &EvalOptions) -> Result<usize> {
    let h = opts.horizon.unwrap_or(cfg.horizon);
    if h == 0 || h > cfg.horizon {
        return Err(Error::param(format!(
            "evaluation horizon {h} must lie in 1..={} (the model's horizon)",
            cfg.horizon
        )));
    }
    Ok(h)
}

/// Seed of the Monte Carlo passes for window `index`.
pub fn window_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64) << 32)
}

/// Forecasts one window. `index` separates the dropout streams of different
/// windows.
pub fn forecast_window(
    sample: &WindowSample,
    params: &ModelParameters,
    cfg: &ModelConfig,
    stats: &NormalizationStats,
    opts: &EvalOptions,
    index: usize,
) -> Result<WindowForecast> {
    let h = resolve_horizon(cfg, opts)?;
    if opts.mc_samples < 2 {
        let f = forward(sample, params, cfg, &ForwardOptions::eval(), &mut rng::seeded(0))?;
        let (mean, variance) = to_units(&f.mean, &f.variance, sample, stats, opts.units, h)?;
        let interval = prediction_interval(&mean, &variance, opts.level)?;
        return Ok(WindowForecast {
            mean,
            variance,
            interval,
            passes: None,
        });
    }
    let mc = mc_forecast(sample, params, cfg, opts.mc_samples, window_seed(opts.seed, index))?;
    let mut means = Vec::with_capacity(mc.samples());
    let mut vars = Vec::with_capacity(mc.samples());
    for (m, v) in mc.sample_means.iter().zip(&mc.sample_variances) {
        let (m, v) = to_units(m, v, sample, stats, opts.units, h)?;
        means.push(m);
        vars.push(v);
    }
    let mc = MCForecast::from_samples(means, vars)?;
    let interval = match opts.interval {
        IntervalMethod::Gaussian => prediction_interval(&mc.mean, &mc.variance, opts.level)?,
        IntervalMethod::Mixture => mixture_interval(&mc, opts.level)?,
    };
    Ok(WindowForecast {
        mean: mc.mean.clone(),
        variance: mc.variance.clone(),
        interval,
        passes: Some(mc),
    })
}

fn stack(rows: &[Tensor]) -> Result<Tensor> {
    let d = rows[0].shape()[1];
    let data: Vec<f64> = rows.iter().flat_map(|t| t.data().iter().copied()).collect();
    let n = data.len() / d;
    Tensor::new(vec![n, d], data)
}

/// Scores the model on `samples`; every entry of every window counts once.
pub fn evaluate(
    params: &ModelParameters,
    cfg: &ModelConfig,
    samples: &[WindowSample],
    stats: &NormalizationStats,
    opts: &EvalOptions,
    dataset: &str,
    model: &str,
) -> Result<MetricReport> {
    let h = resolve_horizon(cfg, opts)?;
    let mut r = evaluate_horizons(params, cfg, samples, stats, opts, &[h], dataset, model)?;
    Ok(r.remove(0))
}

/// One report per entry of `horizons`, each scoring the leading steps of the
/// same forecasts. `opts.horizon` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_horizons(
    params: &ModelParameters,
    cfg: &ModelConfig,
    samples: &[WindowSample],
    stats: &NormalizationStats,
    opts: &EvalOptions,
    horizons: &[usize],
    dataset: &str,
    model: &str,
) -> Result<Vec<MetricReport>> {
    if samples.is_empty() {
        return Err(Error::param("no windows to evaluate"));
    }
    for &h in horizons {
        resolve_horizon(cfg, &EvalOptions { horizon: Some(h), ..opts.clone() })?;
    }
    let full = EvalOptions {
        horizon: None,
        ..opts.clone()
    };
    let forecasts: Vec<WindowForecast> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| forecast_window(s, params, cfg, stats, &full, i))
        .collect::<Result<_>>()?;
    horizons
        .iter()
        .map(|&h| score(samples, &forecasts, stats, opts, h, dataset, model))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn score(
    samples: &[WindowSample],
    forecasts: &[WindowForecast],
    stats: &NormalizationStats,
    opts: &EvalOptions,
    h: usize,
    dataset: &str,
    model: &str,
) -> Result<MetricReport> {
    let mut ys = Vec::with_capacity(samples.len());
    let mut means = Vec::with_capacity(samples.len());
    let mut lows = Vec::with_capacity(samples.len());
    let mut highs = Vec::with_capacity(samples.len());
    let mut crps_sum = 0.0;
    for (s, f) in samples.iter().zip(forecasts) {
        let y = target_in_units(s, stats, opts.units, h);
        let mean = head_rows(&f.mean, h);
        let c = match (opts.crps, &f.passes) {
            (CrpsMethod::Mixture, Some(mc)) => {
                let m: Vec<Tensor> = mc.sample_means.iter().map(|t| head_rows(t, h)).collect();
                let v: Vec<Tensor> = mc.sample_variances.iter().map(|t| head_rows(t, h)).collect();
                crps_mixture(&y, &m, &v)?
            }
            _ => crps_gaussian(&y, &mean, &head_rows(&f.variance, h))?,
        };
        crps_sum += c;
        ys.push(y);
        means.push(mean);
        lows.push(head_rows(&f.interval.lower, h));
        highs.push(head_rows(&f.interval.upper, h));
    }
    let y = stack(&ys)?;
    let p = point_metrics(&y, &stack(&means)?)?;
    let interval = PredictionInterval {
        lower: stack(&lows)?,
        upper: stack(&highs)?,
        level: opts.level,
    };
    Ok(MetricReport {
        dataset: dataset.to_string(),
        model: model.to_string(),
        horizon: h,
        units: opts.units,
        windows: samples.len(),
        mc_samples: if opts.mc_samples < 2 { 1 } else { opts.mc_samples },
        mse: p.mse,
        mae: p.mae,
        rse: p.rse,
        crps: crps_sum / samples.len() as f64,
        pi_level: opts.level,
        pi_coverage: pi_coverage(&y, &interval)?,
    })
}

/// Repeats the last lookback value over the first `h` steps.
pub fn persistence_forecast(sample: &WindowSample, h: usize) -> Tensor {
    let (l, d) = (sample.lookback(), sample.channels());
    let last = sample.x.row(l - 1).to_vec();
    let data = (0..h).flat_map(|_| last.iter().copied()).collect();
    Tensor::new(vec![h, d], data).expect("non-empty")
}

/// Scores the persistence forecast. As a point forecast its CRPS equals the
/// MAE and its intervals have zero width.
pub fn evaluate_persistence(
    samples: &[WindowSample],
    stats: &NormalizationStats,
    horizon: usize,
    units: Units,
    level: f64,
    dataset: &str,
) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::param("no windows to evaluate"));
    }
    if horizon == 0 || samples.iter().any(|s| s.horizon() < horizon) {
        return Err(Error::param(format!("windows do not cover horizon {horizon}")));
    }
    let mut ys = Vec::with_capacity(samples.len());
    let mut fs = Vec::with_capacity(samples.len());
    for s in samples {
        ys.push(target_in_units(s, stats, units, horizon));
        let mut f = persistence_forecast(s, horizon);
        if units == Units::Original {
            let d = s.channels();
            for (k, v) in f.data_mut().iter_mut().enumerate() {
                *v = stats.target[k % d].denormalize(*v);
            }
        }
        fs.push(f);
    }
    let y = stack(&ys)?;
    let f = stack(&fs)?;
    let p = point_metrics(&y, &f)?;
    let interval = PredictionInterval {
        lower: f.clone(),
        upper: f,
        level,
    };
    Ok(MetricReport {
        dataset: dataset.to_string(),
        model: "persistence".into(),
        horizon,
        units,
        windows: samples.len(),
        mc_samples: 0,
        mse: p.mse,
        mae: p.mae,
        rse: p.rse,
        crps: p.mae,
        pi_level: level,
        pi_coverage: pi_coverage(&y, &interval)?,
    })
}

/// Leave-one-scale-out importance at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleImportance {
    pub horizon: usize,
    pub windows: Vec<usize>,
    pub baseline_mse: f64,
    pub ablated_mse: Vec<f64>,
    /// `max(0, ablated − baseline)` normalized to sum to one (all zeros when
    /// no scale matters).
    pub importance: Vec<f64>,
}

fn deterministic_mse(
    params: &ModelParameters,
    cfg: &ModelConfig,
    samples: &[WindowSample],
    zeroed: Vec<usize>,
    h: usize,
) -> Result<f64> {
    let opts = ForwardOptions {
        mode: crate::autodiff::Mode::Eval,
        zeroed_scales: zeroed,
    };
    let errs: Vec<Result<(f64, usize)>> = samples
        .par_iter()
        .map(|s| {
            let f = forward(s, params, cfg, &opts, &mut rng::seeded(0))?;
            let (m, _) = to_units(&f.mean, &f.variance, s, &NormalizationStats::identity(0, 0), Units::Normalized, h)?;
            let y = head_rows(&s.y, h);
            let se = m.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            Ok((se, y.numel()))
        })
        .collect();
    let (mut se, mut n) = (0.0, 0);
    for e in errs {
        let (a, b) = e?;
        se += a;
        n += b;
    }
    Ok(se / n as f64)
}

/// Deterministic MSE with each scale's fusion input zeroed in turn, against
/// the unablated MSE, over the first `horizon` steps.
pub fn scale_importance(
    params: &ModelParameters,
    cfg: &ModelConfig,
    samples: &[WindowSample],
    horizon: usize,
) -> Result<ScaleImportance> {
    if cfg.n_scales() < 2 {
        return Err(Error::param(format!(
            "scale importance needs at least 2 scales, model has {}",
            cfg.n_scales()
        )));
    }
    if samples.is_empty() {
        return Err(Error::param("no windows to analyse"));
    }
    if horizon == 0 || horizon > cfg.horizon {
        return Err(Error::param(format!("horizon {horizon} outside 1..={}", cfg.horizon)));
    }
    let baseline = deterministic_mse(params, cfg, samples, vec![], horizon)?;
    let ablated: Vec<f64> = (0..cfg.n_scales())
        .map(|s| deterministic_mse(params, cfg, samples, vec![s], horizon))
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = ablated.iter().map(|a| (a - baseline).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    let importance = if total > 0.0 {
        raw.iter().map(|r| r / total).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(ScaleImportance {
        horizon,
        windows: cfg.scales.iter().map(|s| s.window).collect(),
        baseline_mse: baseline,
        ablated_mse: ablated,
        importance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, prepare, ChannelStats, SyntheticSpec, WindowSpec, DEFAULT_SPLIT};
    use crate::model::init_model;
    use crate::model::testing::{random_sample, small};

    #[test]
    fn persistence_repeats_last_value() {
        let cfg = small();
        let s = random_sample(&cfg, 1);
        let f = persistence_forecast(&s, 3);
        assert_eq!(f.shape(), &[3, 2]);
        for r in 0..3 {
            assert_eq!(f.row(r), s.x.row(cfg.lookback - 1));
        }
    }

    #[test]
    fn evaluation_is_reproducible_and_consistent() {
        let cfg = small();
        let p = init_model(&cfg, 2).unwrap();
        let samples: Vec<_> = (0..5).map(|i| random_sample(&cfg, i)).collect();
        let stats = NormalizationStats::identity(2, 2);
        let opts = EvalOptions {
            mc_samples: 6,
            ..Default::default()
        };
        let a = evaluate(&p, &cfg, &samples, &stats, &opts, "x", "m").unwrap();
        let b = evaluate(&p, &cfg, &samples, &stats, &opts, "x", "m").unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.mse >= 0.0 && a.mae >= 0.0 && a.rse >= 0.0 && a.crps >= 0.0);
        assert!((0.0..=1.0).contains(&a.pi_coverage));
        assert_eq!(a.horizon, cfg.horizon);

        let short = EvalOptions {
            horizon: Some(2),
            ..opts.clone()
        };
        let c = evaluate(&p, &cfg, &samples, &stats, &short, "x", "m").unwrap();
        assert_eq!(c.horizon, 2);
        let too_long = EvalOptions {
            horizon: Some(cfg.horizon + 1),
            ..opts
        };
        assert!(evaluate(&p, &cfg, &samples, &stats, &too_long, "x", "m").is_err());
    }

    #[test]
    fn horizons_share_forecasts() {
        let cfg = small();
        let p = init_model(&cfg, 3).unwrap();
        let samples: Vec<_> = (0..4).map(|i| random_sample(&cfg, i)).collect();
        let stats = NormalizationStats::identity(2, 2);
        for crps in [CrpsMethod::Gaussian, CrpsMethod::Mixture] {
            let opts = EvalOptions {
                mc_samples: 4,
                crps,
                ..Default::default()
            };
            let all = evaluate_horizons(&p, &cfg, &samples, &stats, &opts, &[1, 3, 4], "x", "m").unwrap();
            for r in &all {
                let one = EvalOptions {
                    horizon: Some(r.horizon),
                    ..opts.clone()
                };
                assert_eq!(r, &evaluate(&p, &cfg, &samples, &stats, &one, "x", "m").unwrap());
            }
        }
        let opts = EvalOptions::default();
        assert!(evaluate_horizons(&p, &cfg, &samples, &stats, &opts, &[5], "x", "m").is_err());
    }

    #[test]
    fn original_units_scale_errors() {
        let cfg = small();
        let p = init_model(&cfg, 2).unwrap();
        let samples: Vec<_> = (0..4).map(|i| random_sample(&cfg, i)).collect();
        let norm = NormalizationStats::identity(2, 2);
        let mut wide = norm.clone();
        wide.target = vec![ChannelStats { mean: 10.0, std: 3.0 }; 2];
        let opts = EvalOptions {
            mc_samples: 0,
            ..Default::default()
        };
        let a = evaluate(&p, &cfg, &samples, &norm, &opts, "x", "m").unwrap();
        let orig = EvalOptions {
            units: Units::Original,
            ..opts
        };
        let b = evaluate(&p, &cfg, &samples, &wide, &orig, "x", "m").unwrap();
        assert!((b.mse - 9.0 * a.mse).abs() < 1e-9 * b.mse);
        assert!((b.crps - 3.0 * a.crps).abs() < 1e-9 * b.crps);
        assert!((b.rse - a.rse).abs() < 1e-9);
        assert_eq!(a.pi_coverage, b.pi_coverage);
    }

    #[test]
    fn interval_contains_mean_for_both_methods() {
        let cfg = small();
        let p = init_model(&cfg, 2).unwrap();
        let s = random_sample(&cfg, 1);
        let stats = NormalizationStats::identity(2, 2);
        for interval in [IntervalMethod::Gaussian, IntervalMethod::Mixture] {
            let opts = EvalOptions {
                mc_samples: 5,
                interval,
                ..Default::default()
            };
            let f = forecast_window(&s, &p, &cfg, &stats, &opts, 0).unwrap();
            for k in 0..f.mean.numel() {
                assert!(f.interval.lower.data()[k] <= f.mean.data()[k]);
                assert!(f.mean.data()[k] <= f.interval.upper.data()[k]);
            }
        }
    }

    #[test]
    fn scale_importance_properties() {
        let cfg = small();
        let mut p = init_model(&cfg, 2).unwrap();
        let samples: Vec<_> = (0..6).map(|i| random_sample(&cfg, i)).collect();
        let imp = scale_importance(&p, &cfg, &samples, cfg.horizon).unwrap();
        let total: f64 = imp.importance.iter().sum();
        assert!(total == 0.0 || (total - 1.0).abs() < 1e-12);

        p.get_mut("fusion.scale1.weight").unwrap().data_mut().fill(0.0);
        let imp = scale_importance(&p, &cfg, &samples, cfg.horizon).unwrap();
        assert_eq!(imp.importance[1], 0.0);
        assert_eq!(imp.ablated_mse[1], imp.baseline_mse);

        let mut one = cfg.clone();
        one.scales.truncate(1);
        let p1 = init_model(&one, 1).unwrap();
        assert!(matches!(scale_importance(&p1, &one, &samples, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn persistence_on_periodic_data() {
        let table = generate_synthetic(3, &SyntheticSpec::default());
        let data = prepare(&table, WindowSpec::new(48, 24), DEFAULT_SPLIT, false).unwrap();
        let r = evaluate_persistence(data.test(), &data.stats, 24, Units::Normalized, 0.95, "syn").unwrap();
        assert_eq!(r.model, "persistence");
        assert_eq!(r.crps, r.mae);
        assert!(r.mse > 0.0);
    }
}
