//! Hourly energy-like series with daily and weekly seasonality driven partly
//! by an observed covariate.

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TimeSeriesTable;
use crate::rng;

pub const DAY: usize = 24;
pub const WEEK: usize = 168;

/// Coefficients of
/// `target(t) = level + a·sin(2πt/24) + b·sin(2πt/168) + c·driver(t) + σ·ε(t)`.
///
/// The driver is a unit-variance AR(1) process with coefficient
/// `driver_persistence` and is emitted as a future-known channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub length: usize,
    pub level: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub driver_coef: f64,
    pub driver_persistence: f64,
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            length: 4 * WEEK,
            level: 0.0,
            daily_amplitude: 1.0,
            weekly_amplitude: 0.5,
            driver_coef: 0.0,
            driver_persistence: 0.9,
            noise_std: 0.05,
        }
    }
}

pub const TARGET_NAME: &str = "target";
pub const DRIVER_NAME: &str = "driver";

pub fn hourly_timestamps(n: usize) -> Vec<NaiveDateTime> {
    let origin = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid origin");
    (0..n).map(|i| origin + TimeDelta::hours(i as i64)).collect()
}

/// Deterministic in `seed`. Lengths below two weeks are allowed; callers
/// that care should warn.
pub fn generate_synthetic(seed: u64, spec: &SyntheticSpec) -> TimeSeriesTable {
    let n = spec.length.max(2);
    let mut noise_rng = rng::labeled(seed, "synthetic/noise");
    let mut driver_rng = rng::labeled(seed, "synthetic/driver");
    let phi = spec.driver_persistence.clamp(-0.999, 0.999);
    let innov = (1.0 - phi * phi).sqrt();

    let mut driver = Vec::with_capacity(n);
    let mut d: f64 = driver_rng.sample(StandardNormal);
    for _ in 0..n {
        driver.push(d);
        let e: f64 = driver_rng.sample(StandardNormal);
        d = phi * d + innov * e;
    }
    let tau = std::f64::consts::TAU;
    let target: Vec<f64> = (0..n)
        .map(|t| {
            let tf = t as f64;
            let e: f64 = noise_rng.sample(StandardNormal);
            spec.level
                + spec.daily_amplitude * (tau * tf / DAY as f64).sin()
                + spec.weekly_amplitude * (tau * tf / WEEK as f64).sin()
                + spec.driver_coef * driver[t]
                + spec.noise_std * e
        })
        .collect();
    TimeSeriesTable::new(
        hourly_timestamps(n),
        vec![TARGET_NAME.into()],
        vec![target],
        vec![DRIVER_NAME.into()],
        vec![driver],
    )
    .expect("generator output is well formed")
}
