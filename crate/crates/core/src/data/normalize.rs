use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::TimeSeriesTable;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest standard deviation used for global z-scoring.
pub const STD_FLOOR: f64 = 1e-8;

/// Smallest standard deviation used for per-window instance normalization.
/// Larger than [`STD_FLOOR`] so a flat lookback cannot blow up the scaled
/// targets of its window.
pub const INSTANCE_STD_FLOOR: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    pub const IDENTITY: ChannelStats = ChannelStats { mean: 0.0, std: 1.0 };

    /// Population mean and standard deviation, with `std` clamped at `floor`.
    pub fn fit(values: &[f64], floor: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        ChannelStats {
            mean,
            std: var.sqrt().max(floor),
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Global z-score statistics fitted on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub target: Vec<ChannelStats>,
    pub future: Vec<ChannelStats>,
}

impl NormalizationStats {
    pub fn identity(n_targets: usize, n_future: usize) -> Self {
        Self {
            target: vec![ChannelStats::IDENTITY; n_targets],
            future: vec![ChannelStats::IDENTITY; n_future],
        }
    }
}

/// Per-channel mean and standard deviation of each target channel over the
/// rows in `train_rows`. Each channel is fitted independently.
pub fn fit_normalizer(table: &TimeSeriesTable, train_rows: Range<usize>) -> Result<NormalizationStats> {
    if train_rows.is_empty() {
        return Err(Error::param("normalizer needs a non-empty training range"));
    }
    if train_rows.end > table.len() {
        return Err(Error::param(format!(
            "training rows {train_rows:?} exceed table length {}",
            table.len()
        )));
    }
    let fit = |c: &Vec<f64>| ChannelStats::fit(&c[train_rows.clone()], STD_FLOOR);
    Ok(NormalizationStats {
        target: table.targets().iter().map(fit).collect(),
        future: table.future_channels().iter().map(fit).collect(),
    })
}

/// Lookback statistics of one window, per target channel, in globally
/// normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub channels: Vec<ChannelStats>,
}

impl InstanceStats {
    pub fn identity(n_targets: usize) -> Self {
        Self {
            channels: vec![ChannelStats::IDENTITY; n_targets],
        }
    }
}

/// Maps a forecast in instance-normalized units back through the instance
/// and then the global normalization. Means undergo both inverse affine maps;
/// variances are multiplied by `(instance_std · global_std)²`.
pub fn denormalize_forecast(
    mean: &Tensor,
    variance: &Tensor,
    stats: &NormalizationStats,
    instance: &InstanceStats,
) -> Result<(Tensor, Tensor)> {
    let (h, d) = mean.dims2()?;
    if variance.shape() != mean.shape() {
        return Err(Error::dim(format!(
            "mean {:?} and variance {:?} differ in shape",
            mean.shape(),
            variance.shape()
        )));
    }
    if stats.target.len() != d || instance.channels.len() != d {
        return Err(Error::dim(format!(
            "forecast has {d} channels but statistics cover {} global / {} instance",
            stats.target.len(),
            instance.channels.len()
        )));
    }
    let mut m = mean.clone();
    let mut v = variance.clone();
    for i in 0..h {
        for j in 0..d {
            let (g, s) = (stats.target[j], instance.channels[j]);
            let k = i * d + j;
            m.data_mut()[k] = g.denormalize(s.denormalize(mean.data()[k]));
            let factor = s.std * g.std;
            v.data_mut()[k] = variance.data()[k] * factor * factor;
        }
    }
    Ok((m, v))
}

/// Undoes only the instance normalization, leaving values in globally
/// normalized units.
pub fn undo_instance(mean: &Tensor, variance: &Tensor, instance: &InstanceStats) -> Result<(Tensor, Tensor)> {
    let d = mean.dims2()?.1;
    denormalize_forecast(mean, variance, &NormalizationStats::identity(d, 0), instance)
}
