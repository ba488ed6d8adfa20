use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chronological train/validation/test ranges over window indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

/// Contiguous train → validation → test ranges over `n_windows` windows.
/// Train and validation sizes are `floor(n · ratio)`; test takes the rest.
pub fn chronological_split(n_windows: usize, ratios: [f64; 3]) -> Result<DatasetSplit> {
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::param(format!("split ratios {ratios:?} must all be positive")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split ratios {ratios:?} sum to {total}, not 1")));
    }
    // Guard against 0.7 * 10 landing just below 7.
    let size = |r: f64| (n_windows as f64 * r + 1e-9).floor() as usize;
    let n_train = size(ratios[0]);
    let n_val = size(ratios[1]);
    let split = DatasetSplit {
        train: 0..n_train,
        validation: n_train..(n_train + n_val).min(n_windows),
        test: (n_train + n_val).min(n_windows)..n_windows,
    };
    split.ensure_non_empty()?;
    Ok(split)
}

impl DatasetSplit {
    fn ensure_non_empty(&self) -> Result<()> {
        for (name, r) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            if r.is_empty() {
                return Err(Error::param(format!("{name} split is empty")));
            }
        }
        Ok(())
    }

    /// Drops `gap` windows from the front of the validation and test ranges
    /// so later lookbacks start after earlier targets begin. With stride-1
    /// windows, `gap = lookback` guarantees that no lookback of a later range
    /// starts before the last target of the previous range.
    pub fn purged(&self, gap: usize) -> Result<DatasetSplit> {
        let cut = |r: &Range<usize>| (r.start + gap).min(r.end)..r.end;
        let s = DatasetSplit {
            train: self.train.clone(),
            validation: cut(&self.validation),
            test: cut(&self.test),
        };
        s.ensure_non_empty()?;
        Ok(s)
    }

    /// Table rows touched by training windows, for fitting normalizers.
    pub fn train_rows(&self, lookback: usize, horizon: usize, stride: usize) -> Range<usize> {
        let first = self.train.start * stride;
        let last = (self.train.end - 1) * stride;
        first..last + lookback + horizon
    }
}
