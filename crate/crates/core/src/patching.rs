//! Window-averaged scale transforms and patch extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Averaging window sizes for hourly data: original, daily and weekly.
pub const HOURLY_WINDOWS: [usize; 3] = [1, 24, 168];
/// Fallback windows for data without an hourly cadence.
pub const GENERIC_WINDOWS: [usize; 3] = [1, 4, 16];
pub const DEFAULT_MAX_PATCH: usize = 16;

/// Geometry of one scale branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSpec {
    /// Averaging window `w_s`.
    pub window: usize,
    /// Patch length `P_s`.
    pub patch_len: usize,
    /// Patch stride `τ_s`.
    pub stride: usize,
}

impl ScaleSpec {
    /// Length of the series after averaging a lookback of `lookback` rows.
    pub fn scaled_len(&self, lookback: usize) -> usize {
        lookback / self.window
    }

    /// Number of patches for a lookback of `lookback` rows.
    pub fn n_patches(&self, lookback: usize) -> usize {
        patch_count(self.scaled_len(lookback), self.patch_len, self.stride)
    }

    pub fn validate(&self, lookback: usize, index: usize) -> Result<()> {
        if self.window == 0 || self.patch_len == 0 || self.stride == 0 {
            return Err(Error::param(format!(
                "scale {index}: window, patch length and stride must be positive"
            )));
        }
        let ls = self.scaled_len(lookback);
        if ls < self.patch_len {
            return Err(Error::param(format!(
                "scale {index}: downsampled length {ls} is shorter than patch length {}",
                self.patch_len
            )));
        }
        Ok(())
    }
}

/// `floor((len - patch) / stride) + 1`, or zero when `len < patch`.
pub fn patch_count(len: usize, patch: usize, stride: usize) -> usize {
    if len < patch || patch == 0 || stride == 0 {
        0
    } else {
        (len - patch) / stride + 1
    }
}

/// Patches of one scale: `n_patches × patch_len × channels`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub scale: usize,
    pub patches: Tensor,
}

impl PatchSet {
    pub fn n_patches(&self) -> usize {
        self.patches.shape()[0]
    }

    pub fn patch_len(&self) -> usize {
        self.patches.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.patches.shape()[2]
    }

    /// `n_patches × patch_len` matrix of a single channel, each row one
    /// flattened patch.
    pub fn channel(&self, c: usize) -> Tensor {
        let (n, p, d) = (self.n_patches(), self.patch_len(), self.channels());
        let src = self.patches.data();
        let data = (0..n * p).map(|k| src[k * d + c]).collect();
        Tensor::new(vec![n, p], data).expect("non-empty patch set")
    }
}

/// Averages non-overlapping blocks of `window` rows of an `L×D` series.
/// Trailing rows that do not fill a block are dropped; `window = 1` returns
/// the input unchanged.
pub fn scale_transform(x: &Tensor, window: usize) -> Result<Tensor> {
    let (l, d) = x.dims2()?;
    if window == 0 {
        return Err(Error::param("scale window must be at least 1"));
    }
    if l < window {
        return Err(Error::param(format!(
            "series of length {l} is shorter than scale window {window}"
        )));
    }
    if window == 1 {
        return Ok(x.clone());
    }
    let ls = l / window;
    let src = x.data();
    let mut out = vec![0.0; ls * d];
    for i in 0..ls {
        for k in i * window..(i + 1) * window {
            for j in 0..d {
                out[i * d + j] += src[k * d + j];
            }
        }
        for v in &mut out[i * d..(i + 1) * d] {
            *v /= window as f64;
        }
    }
    Tensor::new(vec![ls, d], out)
}

/// Extracts `floor((L_s - P) / τ) + 1` patches; patch `n` (0-based) covers
/// rows `n·τ .. n·τ + P`. `scale` only labels errors and the result.
pub fn patchify(x: &Tensor, patch_len: usize, stride: usize, scale: usize) -> Result<PatchSet> {
    let (l, d) = x.dims2()?;
    if patch_len == 0 || stride == 0 {
        return Err(Error::param(format!("scale {scale}: patch length and stride must be positive")));
    }
    if l < patch_len {
        return Err(Error::param(format!(
            "scale {scale}: series length {l} is shorter than patch length {patch_len}"
        )));
    }
    let n = patch_count(l, patch_len, stride);
    let src = x.data();
    let mut data = Vec::with_capacity(n * patch_len * d);
    for p in 0..n {
        let start = p * stride;
        data.extend_from_slice(&src[start * d..(start + patch_len) * d]);
    }
    Ok(PatchSet {
        scale,
        patches: Tensor::new(vec![n, patch_len, d], data)?,
    })
}

/// Patch geometry per scale: `P_s = min(max_patch, L_s)`,
/// `τ_s = max(1, P_s / 2)`. Scales whose downsampled length is below 2 are
/// dropped with a warning.
pub fn scale_specs_for(lookback: usize, windows: &[usize], max_patch: usize) -> Vec<ScaleSpec> {
    windows
        .iter()
        .filter_map(|&w| {
            let ls = lookback / w.max(1);
            if ls < 2 {
                log::warn!(
                    "dropping scale with window {w}: lookback {lookback} leaves only {ls} averaged point(s)"
                );
                return None;
            }
            let patch_len = max_patch.max(1).min(ls);
            Some(ScaleSpec {
                window: w.max(1),
                patch_len,
                stride: (patch_len / 2).max(1),
            })
        })
        .collect()
}

/// The three default scales (hourly: 1, 24 and 168 hours).
pub fn default_scale_specs(lookback: usize, hourly: bool) -> Vec<ScaleSpec> {
    let windows = if hourly { HOURLY_WINDOWS } else { GENERIC_WINDOWS };
    scale_specs_for(lookback, &windows, DEFAULT_MAX_PATCH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn scale_transform_examples() {
        let x = series(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(scale_transform(&x, 1).unwrap(), x);
        assert_eq!(scale_transform(&x, 3).unwrap().data(), &[2.0, 5.0]);
        // remainder dropped
        assert_eq!(scale_transform(&x, 4).unwrap().data(), &[2.5]);
        let c = series(&[7.5; 10]);
        assert_eq!(scale_transform(&c, 3).unwrap().data(), &[7.5; 3]);
        assert!(matches!(scale_transform(&x, 7), Err(Error::Parameter(_))));
    }

    #[test]
    fn scale_transform_multichannel() {
        let x = Tensor::from_rows(&[vec![1.0, 10.0], vec![3.0, 30.0]]).unwrap();
        assert_eq!(scale_transform(&x, 2).unwrap().data(), &[2.0, 20.0]);
    }

    #[test]
    fn patchify_examples() {
        let x = series(&(1..=10).map(f64::from).collect::<Vec<_>>());
        let p = patchify(&x, 4, 2, 0).unwrap();
        assert_eq!(p.n_patches(), 4);
        assert_eq!(p.channel(0).row(3), &[7.0, 8.0, 9.0, 10.0]);
        assert_eq!(patch_count(336, 16, 8), 41);
        let p = patchify(&x, 10, 3, 0).unwrap();
        assert_eq!(p.n_patches(), 1);
        assert_eq!(p.channel(0).data(), x.data());
        let e = patchify(&series(&[1.0, 2.0]), 3, 1, 2).unwrap_err();
        assert!(e.to_string().contains("scale 2"), "{e}");
    }

    #[test]
    fn default_specs() {
        let s = default_scale_specs(336, true);
        let windows: Vec<_> = s.iter().map(|s| s.window).collect();
        assert_eq!(windows, vec![1, 24, 168]);
        let lens: Vec<_> = s.iter().map(|s| s.scaled_len(336)).collect();
        assert_eq!(lens, vec![336, 14, 2]);
        assert_eq!((s[0].patch_len, s[0].stride, s[0].n_patches(336)), (16, 8, 41));
        assert_eq!((s[2].patch_len, s[2].stride, s[2].n_patches(336)), (2, 1, 1));

        let s = default_scale_specs(100, true);
        assert_eq!(s.iter().map(|s| s.window).collect::<Vec<_>>(), vec![1, 24]);
        assert_eq!((s[1].patch_len, s[1].stride), (4, 2));
    }

    #[test]
    fn spec_validation() {
        let s = ScaleSpec {
            window: 24,
            patch_len: 16,
            stride: 8,
        };
        assert!(s.validate(336, 1).is_err());
        assert!(s.validate(24 * 16, 1).is_ok());
    }

    proptest! {
        #[test]
        fn mean_preservation(v in proptest::collection::vec(-100.0f64..100.0, 1..80), w in 1usize..10) {
            prop_assume!(v.len() >= w);
            let x = series(&v);
            let s = scale_transform(&x, w).unwrap();
            let kept = (v.len() / w) * w;
            let want = v[..kept].iter().sum::<f64>() / kept as f64;
            prop_assert!((s.mean() - want).abs() < 1e-12);
        }

        #[test]
        fn composition(a in 1usize..6, b in 1usize..6, reps in 1usize..4, seed in 0u64..1000) {
            let l = a * b * reps;
            let v: Vec<f64> = (0..l).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 7.0).collect();
            let x = series(&v);
            let two = scale_transform(&scale_transform(&x, a).unwrap(), b).unwrap();
            let one = scale_transform(&x, a * b).unwrap();
            for (p, q) in two.data().iter().zip(one.data()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn non_overlapping_patches_reconstruct(v in proptest::collection::vec(-5.0f64..5.0, 1..60), p in 1usize..8) {
            prop_assume!(v.len() >= p);
            let set = patchify(&series(&v), p, p, 0).unwrap();
            let n = set.n_patches();
            let ch = set.channel(0);
            prop_assert_eq!(ch.data(), &v[..n * p]);
        }
    }
}
