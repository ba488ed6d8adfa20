use serde::{Deserialize, Serialize};

use super::normalize::{ChannelStats, InstanceStats, NormalizationStats, INSTANCE_STD_FLOOR};
use super::TimeSeriesTable;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Window geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Normalize each lookback by its own per-channel statistics.
    pub instance_norm: bool,
}

impl WindowSpec {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        Self {
            lookback,
            horizon,
            stride: 1,
            instance_norm: true,
        }
    }

    /// Number of windows a series of `len` rows yields; zero when too short.
    pub fn count(&self, len: usize) -> usize {
        let span = self.lookback + self.horizon;
        if len < span || self.stride == 0 {
            0
        } else {
            (len - span) / self.stride + 1
        }
    }
}

/// One lookback/future-knowns/target triple.
///
/// `x`, `z` and `y` are in globally normalized units. The model works in
/// instance-normalized units, obtained through [`WindowSample::model_input`]
/// and [`WindowSample::model_target`].
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// First row of the lookback in the source table.
    pub start: usize,
    /// `L×D` lookback.
    pub x: Tensor,
    /// `H×E` future-known covariates over the horizon; `None` when `E = 0`.
    pub z: Option<Tensor>,
    /// `H×D` targets.
    pub y: Tensor,
    pub instance: InstanceStats,
}

impl WindowSample {
    pub fn lookback(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.y.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn n_future(&self) -> usize {
        self.z.as_ref().map_or(0, |z| z.shape()[1])
    }

    fn apply_instance(&self, t: &Tensor) -> Tensor {
        let d = self.channels();
        let mut out = t.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v = self.instance.channels[k % d].normalize(*v);
        }
        out
    }

    /// Lookback scaled by the window's instance statistics.
    pub fn model_input(&self) -> Tensor {
        self.apply_instance(&self.x)
    }

    /// Targets scaled by the window's instance statistics.
    pub fn model_target(&self) -> Tensor {
        self.apply_instance(&self.y)
    }

    /// Copy without future covariates.
    pub fn without_future(&self) -> Self {
        Self {
            z: None,
            ..self.clone()
        }
    }
}

fn rows_to_tensor(channels: &[Vec<f64>], rows: std::ops::Range<usize>, stats: &[ChannelStats]) -> Tensor {
    let n = rows.len();
    let d = channels.len();
    let mut data = Vec::with_capacity(n * d);
    for r in rows {
        for (c, s) in channels.iter().zip(stats) {
            data.push(s.normalize(c[r]));
        }
    }
    Tensor::new(vec![n, d], data).expect("non-empty window")
}

fn instance_stats(x: &Tensor, enabled: bool) -> InstanceStats {
    let (l, d) = (x.shape()[0], x.shape()[1]);
    if !enabled {
        return InstanceStats::identity(d);
    }
    InstanceStats {
        channels: (0..d)
            .map(|c| {
                let col: Vec<f64> = (0..l).map(|r| x.at(r, c)).collect();
                ChannelStats::fit(&col, INSTANCE_STD_FLOOR)
            })
            .collect(),
    }
}

/// Sample for forecasting past the end of `table`. The lookback is the last
/// `spec.lookback` rows; `future` holds the raw future-known values over the
/// horizon, one vector of `spec.horizon` values per channel. Targets are zero.
pub fn forecast_sample(
    table: &TimeSeriesTable,
    future: &[Vec<f64>],
    stats: &NormalizationStats,
    spec: WindowSpec,
) -> Result<WindowSample> {
    if spec.lookback == 0 || spec.horizon == 0 {
        return Err(Error::param("lookback and horizon must be positive"));
    }
    if table.len() < spec.lookback {
        return Err(Error::param(format!(
            "input has {} rows but the lookback needs {}",
            table.len(),
            spec.lookback
        )));
    }
    if stats.target.len() != table.n_targets() || stats.future.len() != future.len() {
        return Err(Error::dim("normalization statistics do not match the input's channels"));
    }
    if future.iter().any(|c| c.len() != spec.horizon) {
        return Err(Error::dim(format!("future covariates must cover {} steps", spec.horizon)));
    }
    let start = table.len() - spec.lookback;
    let x = rows_to_tensor(table.targets(), start..table.len(), &stats.target);
    let z = (!future.is_empty()).then(|| rows_to_tensor(future, 0..spec.horizon, &stats.future));
    let instance = instance_stats(&x, spec.instance_norm);
    Ok(WindowSample {
        start,
        x,
        z,
        y: Tensor::zeros(&[spec.horizon, table.n_targets()]),
        instance,
    })
}

/// One sample per valid start position `0, stride, 2·stride, ...`.
pub fn make_windows(
    table: &TimeSeriesTable,
    stats: &NormalizationStats,
    spec: WindowSpec,
) -> Result<Vec<WindowSample>> {
    if spec.lookback == 0 || spec.horizon == 0 || spec.stride == 0 {
        return Err(Error::param("lookback, horizon and stride must be positive"));
    }
    let need = spec.lookback + spec.horizon;
    if table.len() < need {
        return Err(Error::param(format!(
            "series has {} rows but lookback {} + horizon {} requires at least {need}",
            table.len(),
            spec.lookback,
            spec.horizon
        )));
    }
    if stats.target.len() != table.n_targets() || stats.future.len() != table.n_future() {
        return Err(Error::dim("normalization statistics do not match the table's channels"));
    }
    let n = spec.count(table.len());
    let mut out = Vec::with_capacity(n);
    for w in 0..n {
        let start = w * spec.stride;
        let mid = start + spec.lookback;
        let end = mid + spec.horizon;
        let x = rows_to_tensor(table.targets(), start..mid, &stats.target);
        let y = rows_to_tensor(table.targets(), mid..end, &stats.target);
        let z = (table.n_future() > 0)
            .then(|| rows_to_tensor(table.future_channels(), mid..end, &stats.future));
        let instance = instance_stats(&x, spec.instance_norm);
        out.push(WindowSample {
            start,
            x,
            z,
            y,
            instance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::hourly_timestamps;
    use proptest::prelude::*;

    fn table(t: usize) -> TimeSeriesTable {
        let a: Vec<f64> = (0..t).map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64).collect();
        let b: Vec<f64> = (0..t).map(|i| (i * i % 11) as f64).collect();
        let z: Vec<f64> = (0..t).map(|i| -(i as f64)).collect();
        TimeSeriesTable::new(
            hourly_timestamps(t),
            vec!["a".into(), "b".into()],
            vec![a, b],
            vec!["z".into()],
            vec![z],
        )
        .unwrap()
    }

    fn spec(l: usize, h: usize, stride: usize) -> WindowSpec {
        WindowSpec {
            lookback: l,
            horizon: h,
            stride,
            instance_norm: true,
        }
    }

    #[test]
    fn forecast_sample_matches_window() {
        let t = table(20);
        let stats = NormalizationStats::identity(2, 1);
        let sp = spec(6, 3, 1);
        let w = &make_windows(&t, &stats, sp).unwrap()[4];
        let look = t.slice(4..10).unwrap();
        let fut = vec![t.future(0)[10..13].to_vec()];
        let f = forecast_sample(&look, &fut, &stats, sp).unwrap();
        assert_eq!(f.x, w.x);
        assert_eq!(f.z, w.z);
        assert_eq!(f.instance, w.instance);
        assert_eq!(f.y.data(), &[0.0; 6]);
        assert!(forecast_sample(&t.slice(0..5).unwrap(), &fut, &stats, sp).is_err());
        assert!(forecast_sample(&look, &[vec![0.0; 2]], &stats, sp).is_err());
    }

    #[test]
    fn window_counts() {
        let t = table(10);
        let s = NormalizationStats::identity(2, 1);
        assert_eq!(make_windows(&t, &s, spec(4, 2, 1)).unwrap().len(), 5);
        assert_eq!(make_windows(&t, &s, spec(6, 4, 1)).unwrap().len(), 1);
        // stride = H: floor((T - L - H) / H) + 1
        let t = table(23);
        let w = make_windows(&t, &s, spec(5, 3, 3)).unwrap();
        assert_eq!(w.len(), (23 - 5 - 3) / 3 + 1);
        for pair in w.windows(2) {
            assert_eq!(pair[1].start - pair[0].start, 3);
        }
    }

    #[test]
    fn too_short_reports_required_length() {
        let t = table(5);
        let e = make_windows(&t, &NormalizationStats::identity(2, 1), spec(4, 2, 1)).unwrap_err();
        assert!(matches!(e, Error::Parameter(ref m) if m.contains("at least 6")), "{e}");
    }

    #[test]
    fn contents_and_instance_stats() {
        let t = table(12);
        let w = make_windows(&t, &NormalizationStats::identity(2, 1), spec(4, 2, 1)).unwrap();
        let s = &w[3];
        assert_eq!(s.x.shape(), &[4, 2]);
        assert_eq!(s.y.shape(), &[2, 2]);
        assert_eq!(s.z.as_ref().unwrap().data(), &[-7.0, -8.0]);
        assert_eq!(s.y.at(0, 1), t.target(1)[7]);
        let col: Vec<f64> = t.target(0)[3..7].to_vec();
        assert_eq!(s.instance.channels[0], ChannelStats::fit(&col, INSTANCE_STD_FLOOR));
        let xin = s.model_input();
        let m: f64 = (0..4).map(|r| xin.at(r, 0)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn instance_norm_can_be_disabled() {
        let t = table(12);
        let mut sp = spec(4, 2, 1);
        sp.instance_norm = false;
        let w = make_windows(&t, &NormalizationStats::identity(2, 1), sp).unwrap();
        assert_eq!(w[0].model_input(), w[0].x);
    }

    proptest! {
        #[test]
        fn overlapping_lookbacks_agree(t in 8usize..40, l in 1usize..6, h in 1usize..4) {
            prop_assume!(t >= l + h);
            let tab = table(t);
            let stats = crate::data::fit_normalizer(&tab, 0..t).unwrap();
            let w = make_windows(&tab, &stats, spec(l, h, 1)).unwrap();
            // Every row of every lookback equals the globally normalized series.
            for s in &w {
                for r in 0..l {
                    for c in 0..2 {
                        let expect = stats.target[c].normalize(tab.target(c)[s.start + r]);
                        prop_assert_eq!(s.x.at(r, c), expect);
                    }
                }
            }
            for pair in w.windows(2) {
                for r in 1..l {
                    prop_assert_eq!(pair[0].x.row(r), pair[1].x.row(r - 1));
                }
            }
        }
    }
}
