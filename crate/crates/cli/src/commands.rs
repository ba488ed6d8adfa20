//! The subcommands. Each one that produces a run directory creates it
//! exclusively and writes `config.toml` before doing any work.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use multipatch::data::{
    forecast_sample, make_windows, prepare, PreparedData, Schema, TimeSeriesTable, WRITE_FORMAT,
};
use multipatch::model::init_model;
use multipatch::training::{
    finetune, load_checkpoint, pretrain, train, Checkpoint, PretrainCorpus, TrainOutcome, TrainReport,
};
use multipatch::uncertainty::{
    evaluate_horizons, evaluate_persistence, forecast_window, scale_importance, MetricReport, ScaleImportance, Units,
};
use multipatch::{ModelConfig, ModelParameters};
use serde::{Deserialize, Serialize};

use crate::config::{AblationToggles, ExperimentConfig};
use crate::data::{corpus_table, dataset_name, is_hourly, model_config, synthetic_table, target_table, window_spec};
use crate::report::{ablation_text, metrics_text};
use crate::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const TIMING_FILE: &str = "timing.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const FORECAST_FILE: &str = "forecast.csv";
pub const ABLATION_FILE: &str = "ablation.json";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Creates `out` (but not an existing one) and writes the config snapshot.
fn start_run(cfg: &ExperimentConfig, out: &Path) -> CliResult<PathBuf> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::create_dir(out).map_err(|e| match e.kind() {
        std::io::ErrorKind::AlreadyExists => {
            CliError::Usage(format!("output directory {} already exists", out.display()))
        }
        _ => io_err(out, e),
    })?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    Ok(out.to_path_buf())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

#[derive(Serialize)]
struct Timing<'a> {
    epoch_seconds: &'a [f64],
    total_seconds: f64,
}

fn write_training(dir: &Path, ck: &Checkpoint, report: &mut TrainReport, started: Instant) -> CliResult<()> {
    write_file(&dir.join(CHECKPOINT_FILE), &ck.to_bytes()?)?;
    report.best_checkpoint = Some(CHECKPOINT_FILE.into());
    write_json(&dir.join(TRAIN_REPORT_FILE), report)?;
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            epoch_seconds: &report.epoch_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
    )
}

fn require_checkpoint(path: Option<&Path>, command: &str) -> CliResult<PathBuf> {
    let p = path.ok_or_else(|| CliError::Usage(format!("{command} needs --checkpoint")))?;
    if !p.is_file() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", p.display())));
    }
    Ok(p.to_path_buf())
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub path: PathBuf,
    pub snapshot: PathBuf,
    pub rows: usize,
    pub warnings: Vec<String>,
}

/// Writes the synthetic series of `data.synthetic` to `out`, with the config
/// snapshot next to it (`<stem>.config.toml`).
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> CliResult<SynthOutput> {
    let snapshot = out.with_extension(CONFIG_FILE);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    write_file(&snapshot, cfg.to_toml().as_bytes())?;
    let warnings = crate::data::synth_warnings(&cfg.data.synthetic);
    let table = synthetic_table(&cfg.data.synthetic, cfg.seed);
    table.save_csv(out)?;
    Ok(SynthOutput {
        path: out.to_path_buf(),
        snapshot,
        rows: table.len(),
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub config: ModelConfig,
    pub params: ModelParameters,
    pub report: TrainReport,
}

struct Pretrained {
    config: ModelConfig,
    checkpoint: Checkpoint,
    report: TrainReport,
}

fn run_pretraining(cfg: &ExperimentConfig, toggles: &AblationToggles) -> CliResult<Pretrained> {
    let ds = &cfg.pretraining.datasets;
    if ds.is_empty() {
        return Err(CliError::Usage("pretraining corpus is empty".into()));
    }
    // every dataset is loaded before any training starts
    let tables: Vec<TimeSeriesTable> = ds
        .iter()
        .enumerate()
        .map(|(i, d)| corpus_table(cfg, d, i))
        .collect::<CliResult<_>>()?;
    let first = &tables[0];
    let mcfg = model_config(cfg, first.n_targets(), 0, is_hourly(first), toggles)?;
    let spec = window_spec(cfg, mcfg.lookback, mcfg.horizon);
    let mut corpus = PretrainCorpus::default();
    let mut stats = None;
    for (i, (d, t)) in ds.iter().zip(&tables).enumerate() {
        let p = prepare(t, spec, cfg.data.split, cfg.data.purge)
            .map_err(|e| CliError::Runtime(format!("pretraining dataset {}: {e}", d.label(i))))?;
        stats.get_or_insert_with(|| p.stats.clone());
        corpus.push(d.label(i), p.train().to_vec(), p.validation().to_vec(), d.weight);
    }
    let mut tc = cfg.training.train_config(cfg.seed);
    tc.max_epochs = cfg.pretraining.max_epochs.unwrap_or(tc.max_epochs);
    tc.freeze_encoder = false;
    let outcome = pretrain(&corpus, &mcfg, &tc)?;
    let mut config = mcfg;
    config.future_channels = 0;
    let checkpoint = Checkpoint::new(config.clone(), stats.expect("non-empty corpus"), outcome.params)
        .with_names(first.target_names(), first.future_names());
    Ok(Pretrained {
        config,
        checkpoint,
        report: outcome.report,
    })
}

/// Pretrains on the `pretraining.datasets` corpus with the future pathway
/// disabled.
pub fn cmd_pretrain(cfg: &ExperimentConfig, out: &Path) -> CliResult<TrainOutput> {
    let started = Instant::now();
    let dir = start_run(cfg, out)?;
    let Pretrained {
        config,
        checkpoint,
        mut report,
    } = run_pretraining(cfg, &cfg.ablation)?;
    write_training(&dir, &checkpoint, &mut report, started)?;
    Ok(TrainOutput {
        checkpoint: dir.join(CHECKPOINT_FILE),
        dir,
        config,
        params: checkpoint.params,
        report,
    })
}

struct Target {
    name: String,
    table: TimeSeriesTable,
    data: PreparedData,
}

fn load_target(cfg: &ExperimentConfig) -> CliResult<Target> {
    let table = target_table(cfg)?;
    let spec = window_spec(cfg, cfg.data.lookback, cfg.data.horizon);
    let data = prepare(&table, spec, cfg.data.split, cfg.data.purge)?;
    Ok(Target {
        name: dataset_name(cfg),
        table,
        data,
    })
}

/// Trains one configuration on the target data, from `pretrained` when the
/// toggles ask for pretraining.
fn fit(
    cfg: &ExperimentConfig,
    toggles: &AblationToggles,
    target: &Target,
    pretrained: Option<&ModelParameters>,
) -> CliResult<(ModelConfig, TrainOutcome)> {
    let t = &target.table;
    let mcfg = model_config(cfg, t.n_targets(), t.n_future(), is_hourly(t), toggles)?;
    let tc = cfg.training.train_config(cfg.seed);
    let (tr, va) = (target.data.train(), target.data.validation());
    let outcome = match pretrained.filter(|_| toggles.pretraining) {
        Some(p) => finetune(p, &mcfg, tr, va, &tc)?,
        None => train(init_model(&mcfg, cfg.seed)?, &mcfg, tr, va, &tc)?,
    };
    Ok((mcfg, outcome))
}

fn target_checkpoint(mcfg: &ModelConfig, target: &Target, params: ModelParameters) -> Checkpoint {
    Checkpoint::new(mcfg.clone(), target.data.stats.clone(), params)
        .with_names(target.table.target_names(), target.table.future_names())
}

/// Finetunes a pretrained checkpoint on the target data. Without a
/// checkpoint this trains from scratch, which is only allowed when
/// `ablation.pretraining` is off.
pub fn cmd_finetune(cfg: &ExperimentConfig, checkpoint: Option<&Path>, out: &Path) -> CliResult<TrainOutput> {
    let started = Instant::now();
    let path = if cfg.ablation.pretraining {
        Some(require_checkpoint(checkpoint, "finetune")?)
    } else {
        if checkpoint.is_some() {
            log::warn!("ablation.pretraining is off: ignoring --checkpoint and training from scratch");
        }
        None
    };
    let dir = start_run(cfg, out)?;
    let pretrained = path.as_deref().map(load_checkpoint).transpose()?;
    let target = load_target(cfg)?;
    let (mcfg, outcome) = fit(cfg, &cfg.ablation, &target, pretrained.as_ref().map(|c| &c.params))?;
    let TrainOutcome { params, mut report } = outcome;
    let ck = target_checkpoint(&mcfg, &target, params);
    write_training(&dir, &ck, &mut report, started)?;
    Ok(TrainOutput {
        checkpoint: dir.join(CHECKPOINT_FILE),
        dir,
        config: mcfg,
        params: ck.params,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub reports: Vec<MetricReport>,
    pub baseline: Vec<MetricReport>,
    /// Requested horizons the model cannot score.
    pub skipped: Vec<usize>,
    pub scale_importance: Vec<ScaleImportance>,
}

/// Splits requested horizons into those the model covers and the rest.
fn supported_horizons(requested: &[usize], model_horizon: usize) -> (Vec<usize>, Vec<usize>) {
    if requested.is_empty() {
        return (vec![model_horizon], vec![]);
    }
    requested.iter().partition(|&&h| h <= model_horizon)
}

/// Scores a checkpoint on the test split of the target data at every
/// horizon in `evaluation.horizons`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>, out: &Path) -> CliResult<EvaluationOutput> {
    let path = require_checkpoint(checkpoint, "evaluate")?;
    let dir = start_run(cfg, out)?;
    let ck = load_checkpoint(&path)?;
    let mcfg = &ck.config;
    let table = target_table(cfg)?;
    let spec = window_spec(cfg, mcfg.lookback, mcfg.horizon);
    let split = prepare(&table, spec, cfg.data.split, cfg.data.purge)?.split;
    let windows = make_windows(&table, &ck.stats, spec)?;
    let test = &windows[split.test.clone()];
    if test.is_empty() {
        return Err(CliError::Runtime("test split is empty".into()));
    }
    let (horizons, skipped) = supported_horizons(&cfg.evaluation.horizons, mcfg.horizon);
    for h in &skipped {
        log::warn!("skipping horizon {h}: the model forecasts {} steps", mcfg.horizon);
    }
    let name = dataset_name(cfg);
    let opts = cfg.eval_options(&cfg.ablation);
    let mut result = EvaluationOutput {
        reports: Vec::new(),
        baseline: Vec::new(),
        skipped,
        scale_importance: Vec::new(),
    };
    if !horizons.is_empty() {
        result.reports = evaluate_horizons(&ck.params, mcfg, test, &ck.stats, &opts, &horizons, &name, "model")?;
    }
    for &h in &horizons {
        if cfg.evaluation.baseline {
            result
                .baseline
                .push(evaluate_persistence(test, &ck.stats, h, opts.units, opts.level, &name)?);
        }
        if mcfg.n_scales() > 1 {
            result.scale_importance.push(scale_importance(&ck.params, mcfg, test, h)?);
        }
    }
    write_json(&dir.join(METRICS_FILE), &result)?;
    write_file(&dir.join("metrics.txt"), metrics_text(&result).as_bytes())?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub timestamp: String,
    pub channel: String,
    pub mean: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct ForecastOutput {
    pub dir: PathBuf,
    pub rows: Vec<ForecastRow>,
}

fn schema_mismatch(expected: &[String], found: &[String]) -> Option<String> {
    let missing: Vec<&str> = expected.iter().filter(|n| !found.contains(n)).map(String::as_str).collect();
    let extra: Vec<&str> = found.iter().filter(|n| !expected.contains(n)).map(String::as_str).collect();
    if missing.is_empty() && extra.is_empty() {
        return None;
    }
    Some(format!(
        "input columns do not match the checkpoint: missing [{}], extra [{}]",
        missing.join(", "),
        extra.join(", ")
    ))
}

/// Forecasts `H` steps past the end of `input` (the target data when
/// absent), in original units.
///
/// With a future pathway and at least `L + H` rows, the last `H` rows supply
/// the future covariates and the lookback ends just before them. With fewer
/// rows the last covariate values are held over the horizon.
pub fn cmd_forecast(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    input: Option<&Path>,
    out: &Path,
) -> CliResult<ForecastOutput> {
    let path = require_checkpoint(checkpoint, "forecast")?;
    let dir = start_run(cfg, out)?;
    let ck = load_checkpoint(&path)?;
    let mcfg = &ck.config;
    let raw = match input {
        Some(p) => multipatch::data::load_csv(p, &Schema::LastTargetRestFuture)?,
        None => target_table(cfg)?,
    };
    let found: Vec<String> = raw.future_names().iter().chain(raw.target_names()).cloned().collect();
    let table = match &ck.names {
        Some(n) => {
            let expected: Vec<String> = n.target.iter().chain(&n.future).cloned().collect();
            if let Some(msg) = schema_mismatch(&expected, &found) {
                return Err(CliError::Runtime(msg));
            }
            match input {
                Some(p) => multipatch::data::load_csv(p, &Schema::explicit(&n.target, &n.future))?,
                None => target_table(cfg)?,
            }
        }
        None => raw,
    };
    if table.n_targets() != mcfg.channels || table.n_future() != ck.stats.future.len() {
        return Err(CliError::Runtime(format!(
            "input has {} target and {} future-known channels, checkpoint expects {} and {}",
            table.n_targets(),
            table.n_future(),
            mcfg.channels,
            ck.stats.future.len()
        )));
    }
    let (l, h) = (mcfg.lookback, mcfg.horizon);
    let n = table.len();
    if n < l {
        return Err(CliError::Runtime(format!("input has {n} rows, the lookback needs {l}")));
    }
    let (lookback, future): (TimeSeriesTable, Vec<Vec<f64>>) = if mcfg.has_future() && n >= l + h {
        let fut = table.future_channels().iter().map(|c| c[n - h..].to_vec()).collect();
        (table.slice(0..n - h)?, fut)
    } else {
        if mcfg.has_future() {
            log::warn!("input has fewer than lookback + horizon rows: holding the last covariate values");
        }
        let fut = table.future_channels().iter().map(|c| vec![c[n - 1]; h]).collect();
        (table, fut)
    };
    let spec = window_spec(cfg, l, h);
    let sample = forecast_sample(&lookback, &future, &ck.stats, spec)?;
    let mut opts = cfg.eval_options(&cfg.ablation);
    opts.units = Units::Original;
    let f = forecast_window(&sample, &ck.params, mcfg, &ck.stats, &opts, 0)?;
    let ts = lookback.timestamps();
    let last = ts[ts.len() - 1];
    let step = lookback.step();
    let mut rows = Vec::with_capacity(h * mcfg.channels);
    for k in 0..h {
        let stamp = (last + step * (k as i32 + 1)).format(WRITE_FORMAT).to_string();
        for (c, name) in lookback.target_names().iter().enumerate() {
            rows.push(ForecastRow {
                timestamp: stamp.clone(),
                channel: name.clone(),
                mean: f.mean.at(k, c),
                variance: f.variance.at(k, c),
                lower: f.interval.lower.at(k, c),
                upper: f.interval.upper.at(k, c),
            });
        }
    }
    let file = dir.join(FORECAST_FILE);
    let mut w = csv::Writer::from_path(&file).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(&file, e))?;
    Ok(ForecastOutput { dir, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoMultiScale,
    NoFutureVariables,
    NoUncertainty,
    NoPretraining,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoMultiScale,
        Variant::NoFutureVariables,
        Variant::NoUncertainty,
        Variant::NoPretraining,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Full Model",
            Variant::NoMultiScale => "- Multi-scale",
            Variant::NoFutureVariables => "- Future Variables",
            Variant::NoUncertainty => "- Uncertainty Est.",
            Variant::NoPretraining => "- Pre-training",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMultiScale => "no_multi_scale",
            Variant::NoFutureVariables => "no_future_variables",
            Variant::NoUncertainty => "no_uncertainty",
            Variant::NoPretraining => "no_pretraining",
        }
    }

    pub fn toggles(self, base: AblationToggles) -> AblationToggles {
        let mut t = base;
        match self {
            Variant::Full => {}
            Variant::NoMultiScale => t.multi_scale = false,
            Variant::NoFutureVariables => t.future_variables = false,
            Variant::NoUncertainty => t.mc_dropout = false,
            Variant::NoPretraining => t.pretraining = false,
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: String,
    /// Test MSE per horizon.
    pub mse: Vec<f64>,
    /// `100·(mse − full)/full` per horizon.
    pub delta_pct: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub dataset: String,
    pub seed: u64,
    pub horizons: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

/// Retrains the full model and the four single-component ablations with a
/// shared seed and scores each on the test split. Variants that use
/// pretraining share one pretrained checkpoint.
pub fn cmd_ablate(cfg: &ExperimentConfig, out: &Path) -> CliResult<AblationTable> {
    let started = Instant::now();
    let dir = start_run(cfg, out)?;
    let base = cfg.ablation;
    let target = load_target(cfg)?;
    let pretrained = if base.pretraining {
        let p = run_pretraining(cfg, &base)?;
        let pdir = dir.join("pretrain");
        fs::create_dir(&pdir).map_err(|e| io_err(&pdir, e))?;
        let mut report = p.report;
        write_training(&pdir, &p.checkpoint, &mut report, started)?;
        Some(p.checkpoint.params)
    } else {
        None
    };
    let (horizons, skipped) = supported_horizons(&cfg.evaluation.horizons, cfg.data.horizon);
    for h in &skipped {
        log::warn!("skipping horizon {h}: the model forecasts {} steps", cfg.data.horizon);
    }
    if horizons.is_empty() {
        return Err(CliError::Usage("no requested horizon fits data.horizon".into()));
    }
    let mut rows: Vec<AblationRow> = Vec::with_capacity(Variant::ALL.len());
    for v in Variant::ALL {
        log::info!("ablation variant {}", v.label());
        let t0 = Instant::now();
        let toggles = v.toggles(base);
        let (mcfg, outcome) = fit(cfg, &toggles, &target, pretrained.as_ref())?;
        let TrainOutcome { params, mut report } = outcome;
        let opts = cfg.eval_options(&toggles);
        let reports = evaluate_horizons(
            &params,
            &mcfg,
            target.data.test(),
            &target.data.stats,
            &opts,
            &horizons,
            &target.name,
            v.label(),
        )?;
        let vdir = dir.join(v.slug());
        fs::create_dir(&vdir).map_err(|e| io_err(&vdir, e))?;
        write_training(&vdir, &target_checkpoint(&mcfg, &target, params), &mut report, t0)?;
        write_json(&vdir.join(METRICS_FILE), &reports)?;
        let mse: Vec<f64> = reports.iter().map(|r| r.mse).collect();
        let delta_pct = match rows.first() {
            Some(full) => mse.iter().zip(&full.mse).map(|(m, f)| 100.0 * (m - f) / f).collect(),
            None => vec![0.0; mse.len()],
        };
        rows.push(AblationRow {
            variant: v,
            label: v.label().into(),
            mse,
            delta_pct,
        });
    }
    let table = AblationTable {
        dataset: target.name,
        seed: cfg.seed,
        horizons,
        rows,
    };
    write_json(&dir.join(ABLATION_FILE), &table)?;
    write_file(&dir.join("ablation.txt"), ablation_text(&table).as_bytes())?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_partition() {
        assert_eq!(supported_horizons(&[], 24), (vec![24], vec![]));
        assert_eq!(supported_horizons(&[12, 48, 24], 24), (vec![12, 24], vec![48]));
    }

    #[test]
    fn mismatch_names_both_sides() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(schema_mismatch(&s(&["y", "z"]), &s(&["z", "y"])), None);
        let m = schema_mismatch(&s(&["y", "z"]), &s(&["y", "w"])).unwrap();
        assert!(m.contains("missing [z]") && m.contains("extra [w]"), "{m}");
    }

    #[test]
    fn variant_toggles_flip_one_switch() {
        let base = AblationToggles::default();
        let off: Vec<usize> = Variant::ALL
            .iter()
            .map(|v| {
                let t = v.toggles(base);
                [t.multi_scale, t.future_variables, t.mc_dropout, t.pretraining]
                    .iter()
                    .filter(|b| !**b)
                    .count()
            })
            .collect();
        assert_eq!(off, vec![0, 1, 1, 1, 1]);
    }

    #[test]
    fn run_directory_is_exclusive() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        let cfg = ExperimentConfig::default();
        start_run(&cfg, &out).unwrap();
        let snap = fs::read_to_string(out.join(CONFIG_FILE)).unwrap();
        assert_eq!(snap, cfg.to_toml());
        let err = start_run(&cfg, &out).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
