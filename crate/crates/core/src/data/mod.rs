//! Loading, normalization, windowing and splitting of multivariate series.

mod normalize;
mod split;
pub mod synthetic;
mod table;
mod window;

pub use normalize::{
    denormalize_forecast, fit_normalizer, undo_instance, ChannelStats, InstanceStats,
    NormalizationStats, INSTANCE_STD_FLOOR, STD_FLOOR,
};
pub use split::{chronological_split, DatasetSplit};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use table::{load_csv, parse_timestamp, read_csv, ColumnRole, Schema, TimeSeriesTable, WRITE_FORMAT};
pub use window::{forecast_sample, make_windows, WindowSample, WindowSpec};

use crate::error::Result;

pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

/// A table cut into normalized windows with a chronological split.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub stats: NormalizationStats,
    pub windows: Vec<WindowSample>,
    pub split: DatasetSplit,
    pub spec: WindowSpec,
}

impl PreparedData {
    pub fn train(&self) -> &[WindowSample] {
        &self.windows[self.split.train.clone()]
    }

    pub fn validation(&self) -> &[WindowSample] {
        &self.windows[self.split.validation.clone()]
    }

    pub fn test(&self) -> &[WindowSample] {
        &self.windows[self.split.test.clone()]
    }
}

/// Splits the window index space, fits global statistics on the rows the
/// training windows touch, and builds every window. `purge` drops
/// `lookback / stride` windows at the start of the validation and test
/// ranges.
pub fn prepare(table: &TimeSeriesTable, spec: WindowSpec, ratios: [f64; 3], purge: bool) -> Result<PreparedData> {
    let n = spec.count(table.len());
    if n == 0 {
        // surfaces the "requires at least" message
        make_windows(table, &NormalizationStats::identity(table.n_targets(), table.n_future()), spec)?;
    }
    let mut split = chronological_split(n, ratios)?;
    if purge {
        split = split.purged(spec.lookback.div_ceil(spec.stride))?;
    }
    let stats = fit_normalizer(table, split.train_rows(spec.lookback, spec.horizon, spec.stride))?;
    let windows = make_windows(table, &stats, spec)?;
    Ok(PreparedData {
        stats,
        windows,
        split,
        spec,
    })
}
