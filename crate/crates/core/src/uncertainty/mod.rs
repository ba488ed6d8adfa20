//! Monte Carlo dropout, prediction intervals, metrics and scale importance.

mod evaluate;
mod mc;
mod metrics;

pub use evaluate::{
    evaluate, evaluate_horizons, evaluate_persistence, forecast_window, persistence_forecast, scale_importance, target_in_units,
    window_seed, CrpsMethod, EvalOptions, IntervalMethod, ScaleImportance, WindowForecast,
};
pub use mc::{
    mc_forecast, mixture_interval, normal_half_width, prediction_interval, MCForecast, PredictionInterval,
    DEFAULT_MC_SAMPLES,
};
pub use metrics::{
    crps_gaussian, crps_gaussian_scalar, crps_mixture, pi_coverage, point_metrics, std_normal_cdf, MetricReport,
    PointMetrics, Units,
};
