//! Point and probabilistic accuracy metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::mc::PredictionInterval;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub mse: f64,
    pub mae: f64,
    pub rse: f64,
}

/// MSE and MAE averaged over every entry; RSE is
/// `sqrt(Σ(y − ŷ)² / Σ(y − ȳ)²)` with `ȳ` the mean over all entries.
pub fn point_metrics(y: &Tensor, y_hat: &Tensor) -> Result<PointMetrics> {
    same_shape(y, y_hat, "point metrics")?;
    let n = y.numel() as f64;
    let y_bar = y.mean();
    let (mut se, mut ae, mut tot) = (0.0, 0.0, 0.0);
    for (a, b) in y.data().iter().zip(y_hat.data()) {
        se += (a - b) * (a - b);
        ae += (a - b).abs();
        tot += (a - y_bar) * (a - y_bar);
    }
    if tot == 0.0 {
        return Err(Error::domain("RSE is undefined for a constant target"));
    }
    Ok(PointMetrics {
        mse: se / n,
        mae: ae / n,
        rse: (se / tot).sqrt(),
    })
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard-normal CDF through `erf` (statrs, accurate to machine precision
/// for moderate arguments).
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// CRPS of `N(mean, σ²)` at `y`.
pub fn crps_gaussian_scalar(y: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::domain(format!("CRPS needs positive variance, got {variance}")));
    }
    let s = variance.sqrt();
    let z = (y - mean) / s;
    Ok(s * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / PI.sqrt()))
}

/// Gaussian CRPS averaged over every entry.
pub fn crps_gaussian(y: &Tensor, mean: &Tensor, variance: &Tensor) -> Result<f64> {
    same_shape(y, mean, "crps")?;
    same_shape(y, variance, "crps variance")?;
    let mut total = 0.0;
    for ((a, m), v) in y.data().iter().zip(mean.data()).zip(variance.data()) {
        total += crps_gaussian_scalar(*a, *m, *v)?;
    }
    Ok(total / y.numel() as f64)
}

/// `E|X|` for `X ~ N(m, s²)`.
fn abs_moment(m: f64, s: f64) -> f64 {
    if s == 0.0 {
        return m.abs();
    }
    let z = m / s;
    m * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * s * std_normal_pdf(z)
}

/// CRPS of the equally weighted mixture of per-pass Gaussians,
/// `E|X − y| − E|X − X'|/2`, averaged over every entry.
pub fn crps_mixture(y: &Tensor, means: &[Tensor], variances: &[Tensor]) -> Result<f64> {
    if means.is_empty() || means.len() != variances.len() {
        return Err(Error::param("mixture CRPS needs matching non-empty components"));
    }
    for (m, v) in means.iter().zip(variances) {
        same_shape(y, m, "mixture crps")?;
        same_shape(y, v, "mixture crps variance")?;
        if let Some(x) = v.data().iter().find(|x| !(**x > 0.0)) {
            return Err(Error::domain(format!("CRPS needs positive variance, got {x}")));
        }
    }
    let k = means.len() as f64;
    let mut total = 0.0;
    for e in 0..y.numel() {
        let comps: Vec<(f64, f64)> = means.iter().zip(variances).map(|(m, v)| (m.data()[e], v.data()[e])).collect();
        let first: f64 = comps.iter().map(|(m, v)| abs_moment(m - y.data()[e], v.sqrt())).sum::<f64>() / k;
        let mut second = 0.0;
        for (mi, vi) in &comps {
            for (mj, vj) in &comps {
                second += abs_moment(mi - mj, (vi + vj).sqrt());
            }
        }
        total += first - 0.5 * second / (k * k);
    }
    Ok(total / y.numel() as f64)
}

/// Fraction of entries with `lower ≤ y ≤ upper`.
pub fn pi_coverage(y: &Tensor, interval: &PredictionInterval) -> Result<f64> {
    same_shape(y, &interval.lower, "coverage")?;
    same_shape(y, &interval.upper, "coverage")?;
    let inside = y
        .data()
        .iter()
        .zip(interval.lower.data().iter().zip(interval.upper.data()))
        .filter(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
        .count();
    Ok(inside as f64 / y.numel() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Globally z-scored units (instance normalization undone).
    Normalized,
    /// Units of the input data.
    Original,
}

/// Accuracy summary for one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub model: String,
    pub horizon: usize,
    pub units: Units,
    pub windows: usize,
    pub mc_samples: usize,
    pub mse: f64,
    pub mae: f64,
    pub rse: f64,
    pub crps: f64,
    pub pi_level: f64,
    pub pi_coverage: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::uncertainty::prediction_interval;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    /// `∫(F(x) − 1{x ≥ y})² dx` by the trapezoid rule, with `F` itself built by
    /// cumulative trapezoid integration of the density.
    fn crps_by_quadrature(y: f64, mean: f64, sd: f64) -> f64 {
        let lo = mean.min(y) - 12.0 * sd;
        let hi = mean.max(y) + 12.0 * sd;
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        let pdf = |x: f64| (-(x - mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt());
        let mut cdf = 0.0;
        let mut prev_pdf = pdf(lo);
        let mut prev_f = 0.0;
        let mut total = 0.0;
        for i in 1..=n {
            let x = lo + i as f64 * h;
            let p = pdf(x);
            cdf += 0.5 * (prev_pdf + p) * h;
            prev_pdf = p;
            let x0 = x - h;
            // split the step at y so the indicator jump is integrated exactly
            if x0 < y && y <= x {
                let f_y = prev_f + (cdf - prev_f) * (y - x0) / h;
                total += 0.5 * (prev_f.powi(2) + f_y.powi(2)) * (y - x0);
                total += 0.5 * ((f_y - 1.0).powi(2) + (cdf - 1.0).powi(2)) * (x - y);
            } else {
                let step = |f: f64| if x0 >= y { (f - 1.0).powi(2) } else { f * f };
                total += 0.5 * (step(prev_f) + step(cdf)) * h;
            }
            prev_f = cdf;
        }
        total
    }

    #[test]
    fn point_examples() {
        let y = t(&[1.0, 2.0, 4.0]);
        assert_eq!(point_metrics(&y, &y).unwrap(), PointMetrics { mse: 0.0, mae: 0.0, rse: 0.0 });
        let mean = t(&[7.0 / 3.0; 3]);
        assert!((point_metrics(&y, &mean).unwrap().rse - 1.0).abs() < 1e-12);
        let m = point_metrics(&t(&[0.0, 2.0]), &t(&[1.0, 1.0])).unwrap();
        assert_eq!(m, PointMetrics { mse: 1.0, mae: 1.0, rse: 1.0 });
        assert!(matches!(point_metrics(&t(&[3.0, 3.0]), &t(&[1.0, 1.0])), Err(Error::Domain(_))));
        assert!(matches!(point_metrics(&t(&[3.0]), &t(&[1.0, 1.0])), Err(Error::Dimension(_))));
    }

    #[test]
    fn crps_matches_quadrature() {
        for z in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            for sd in [0.1, 1.0, 10.0] {
                let mean = 0.4;
                let y = mean + z * sd;
                let closed = crps_gaussian_scalar(y, mean, sd * sd).unwrap();
                let numeric = crps_by_quadrature(y, mean, sd);
                assert!((closed - numeric).abs() < 1e-3, "z {z} sd {sd}: {closed} vs {numeric}");
            }
        }
        let c = crps_gaussian_scalar(0.0, 0.0, 1.0).unwrap();
        assert!((c - crps_by_quadrature(0.0, 0.0, 1.0)).abs() < 1e-6);
        assert!((c - 0.23370).abs() < 1e-5);
        let c = crps_gaussian_scalar(1.96, 0.0, 1.0).unwrap();
        assert!((c - 1.4147).abs() < 1e-4, "{c}");
    }

    #[test]
    fn crps_properties() {
        for (y, m) in [(1.0, 0.0), (-2.5, 0.5), (0.3, 0.3)] {
            let c = crps_gaussian_scalar(y, m, 1e-12).unwrap();
            assert!((c - f64::abs(y - m)).abs() < 1e-4);
            let k: f64 = 3.7;
            let a = crps_gaussian_scalar(k * y, k * m, k * k * 0.8).unwrap();
            let b = crps_gaussian_scalar(y, m, 0.8).unwrap();
            assert!((a - k * b).abs() < 1e-12);
        }
        assert!(matches!(crps_gaussian(&t(&[0.0]), &t(&[0.0]), &t(&[0.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn mixture_crps_reduces_to_gaussian() {
        let y = t(&[0.3, -1.0]);
        let m = t(&[0.0, 0.5]);
        let v = t(&[2.0, 0.5]);
        let one = crps_mixture(&y, &[m.clone(), m.clone()], &[v.clone(), v.clone()]).unwrap();
        assert!((one - crps_gaussian(&y, &m, &v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn coverage_examples() {
        let y = t(&[0.0, 1.0, 2.0, 3.0]);
        let wide = prediction_interval(&y, &t(&[1.0; 4]), 0.9).unwrap();
        assert_eq!(pi_coverage(&y, &wide).unwrap(), 1.0);
        let half = PredictionInterval {
            lower: t(&[0.0, 0.0, 5.0, 5.0]),
            upper: t(&[1.0, 1.0, 6.0, 6.0]),
            level: 0.9,
        };
        assert_eq!(pi_coverage(&y, &half).unwrap(), 0.5);
    }

    #[test]
    fn coverage_of_true_model() {
        let mut r = rng::seeded(17);
        let n = 100_000;
        let means: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
        let vars: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..4.0)).collect();
        let y: Vec<f64> = means
            .iter()
            .zip(&vars)
            .map(|(m, v)| Normal::new(*m, v.sqrt()).unwrap().sample(&mut r))
            .collect();
        let pi = prediction_interval(&t(&means), &t(&vars), 0.95).unwrap();
        let c = pi_coverage(&t(&y), &pi).unwrap();
        assert!((0.945..=0.955).contains(&c), "{c}");
    }
}
