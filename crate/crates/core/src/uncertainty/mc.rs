//! Monte Carlo dropout inference and Gaussian prediction intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::autodiff::Mode;
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::{forward, ForwardOptions, GaussianForecast, ModelConfig, ModelParameters};
use crate::rng;
use crate::tensor::Tensor;

pub const DEFAULT_MC_SAMPLES: usize = 50;

/// `M` stochastic forecasts and their combination.
#[derive(Clone, Debug, PartialEq)]
pub struct MCForecast {
    /// Per-pass means, each `H × D`.
    pub sample_means: Vec<Tensor>,
    /// Per-pass predicted variances, each `H × D`.
    pub sample_variances: Vec<Tensor>,
    pub mean: Tensor,
    /// Mean predicted variance plus the population variance of the means.
    pub variance: Tensor,
}

impl MCForecast {
    pub fn samples(&self) -> usize {
        self.sample_means.len()
    }

    pub fn combined(&self) -> GaussianForecast {
        GaussianForecast {
            mean: self.mean.clone(),
            variance: self.variance.clone(),
        }
    }

    /// The mean of the per-pass variances (the aleatoric part).
    pub fn aleatoric(&self) -> Tensor {
        mean_of(&self.sample_variances)
    }

    /// Combines hand-built or computed passes.
    pub fn from_samples(sample_means: Vec<Tensor>, sample_variances: Vec<Tensor>) -> Result<Self> {
        if sample_means.is_empty() || sample_means.len() != sample_variances.len() {
            return Err(Error::param(format!(
                "need matching non-empty sample sets, got {} means and {} variances",
                sample_means.len(),
                sample_variances.len()
            )));
        }
        let shape = sample_means[0].shape().to_vec();
        if sample_means.iter().chain(&sample_variances).any(|t| t.shape() != shape.as_slice()) {
            return Err(Error::dim("all Monte Carlo samples must share one shape"));
        }
        let m = sample_means.len() as f64;
        let mean = mean_of(&sample_means);
        let mut variance = mean_of(&sample_variances);
        for s in &sample_means {
            for ((v, x), mu) in variance.data_mut().iter_mut().zip(s.data()).zip(mean.data()) {
                *v += (x - mu) * (x - mu) / m;
            }
        }
        Ok(Self {
            sample_means,
            sample_variances,
            mean,
            variance,
        })
    }
}

fn mean_of(ts: &[Tensor]) -> Tensor {
    let mut out = Tensor::zeros(ts[0].shape());
    for t in ts {
        out.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
    }
    let n = ts.len() as f64;
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    out
}

/// `samples` forward passes with dropout active; pass `i` draws its masks
/// from the generator seeded with `seed + i`.
pub fn mc_forecast(
    sample: &WindowSample,
    params: &ModelParameters,
    cfg: &ModelConfig,
    samples: usize,
    seed: u64,
) -> Result<MCForecast> {
    if samples < 2 {
        return Err(Error::param(format!("Monte Carlo dropout needs at least 2 passes, got {samples}")));
    }
    if cfg.dropout == 0.0 {
        log::warn!("dropout rate is 0: Monte Carlo passes are identical and the epistemic term vanishes");
    }
    let opts = ForwardOptions::new(Mode::Train);
    let passes: Vec<Result<GaussianForecast>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| forward(sample, params, cfg, &opts, &mut rng::seeded(seed.wrapping_add(i))))
        .collect();
    let mut means = Vec::with_capacity(samples);
    let mut vars = Vec::with_capacity(samples);
    for p in passes {
        let p = p?;
        means.push(p.mean);
        vars.push(p.variance);
    }
    MCForecast::from_samples(means, vars)
}

/// Central interval with nominal coverage `level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: Tensor,
    pub upper: Tensor,
    pub level: f64,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param(format!("interval level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Standard-normal quantile at `(1 + level) / 2`.
pub fn normal_half_width(level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(Normal::standard().inverse_cdf((1.0 + level) / 2.0))
}

/// `mean ± z·sqrt(variance)`.
pub fn prediction_interval(mean: &Tensor, variance: &Tensor, level: f64) -> Result<PredictionInterval> {
    let z = normal_half_width(level)?;
    if mean.shape() != variance.shape() {
        return Err(Error::dim(format!(
            "mean {:?} and variance {:?} differ in shape",
            mean.shape(),
            variance.shape()
        )));
    }
    if let Some(v) = variance.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::domain(format!("interval needs non-negative variance, got {v}")));
    }
    let half: Vec<f64> = variance.data().iter().map(|v| z * v.sqrt()).collect();
    let lower = mean.data().iter().zip(&half).map(|(m, h)| m - h).collect();
    let upper = mean.data().iter().zip(&half).map(|(m, h)| m + h).collect();
    Ok(PredictionInterval {
        lower: Tensor::new(mean.shape().to_vec(), lower)?,
        upper: Tensor::new(mean.shape().to_vec(), upper)?,
        level,
    })
}

/// Interval from the quantiles of the equally weighted Gaussian mixture of
/// the Monte Carlo passes, found by bisection on the mixture CDF.
pub fn mixture_interval(mc: &MCForecast, level: f64) -> Result<PredictionInterval> {
    check_level(level)?;
    let n = Normal::standard();
    let shape = mc.mean.shape().to_vec();
    let alpha = (1.0 - level) / 2.0;
    let count = mc.mean.numel();
    let mut lower = Vec::with_capacity(count);
    let mut upper = Vec::with_capacity(count);
    for k in 0..count {
        let comps: Vec<(f64, f64)> = mc
            .sample_means
            .iter()
            .zip(&mc.sample_variances)
            .map(|(m, v)| (m.data()[k], v.data()[k].sqrt()))
            .collect();
        let cdf = |x: f64| {
            comps.iter().map(|(m, s)| n.cdf((x - m) / s)).sum::<f64>() / comps.len() as f64
        };
        let lo = comps.iter().map(|(m, s)| m - 10.0 * s).fold(f64::INFINITY, f64::min);
        let hi = comps.iter().map(|(m, s)| m + 10.0 * s).fold(f64::NEG_INFINITY, f64::max);
        let solve = |p: f64| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if cdf(mid) < p {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        };
        lower.push(solve(alpha).min(mc.mean.data()[k]));
        upper.push(solve(1.0 - alpha).max(mc.mean.data()[k]));
    }
    Ok(PredictionInterval {
        lower: Tensor::new(shape.clone(), lower)?,
        upper: Tensor::new(shape, upper)?,
        level,
    })
}
