//! End-to-end runs of the library on synthetic data.

use multipatch::data::synthetic::WEEK;
use multipatch::data::{generate_synthetic, prepare, SyntheticSpec, WindowSpec, DEFAULT_SPLIT};
use multipatch::model::init_model;
use multipatch::patching::{scale_specs_for, scale_transform};
use multipatch::training::{finetune, pretrain, train, PretrainCorpus, TrainConfig};
use multipatch::uncertainty::scale_importance;
use multipatch::ModelConfig;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn model(lookback: usize, horizon: usize, windows: &[usize], future: usize) -> ModelConfig {
    ModelConfig {
        scales: scale_specs_for(lookback, windows, 16),
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        ff_dim: 32,
        dropout: 0.1,
        ..ModelConfig::new(lookback, horizon, 1, future)
    }
}

#[test]
fn pretraining_helps_early_validation_loss() {
    let cfg = model(96, 24, &[1, 24], 1);
    let spec = WindowSpec::new(96, 24);
    let mut pre_loss = Vec::new();
    let mut scratch_loss = Vec::new();
    for seed in [1u64, 2, 3] {
        let tc = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 16,
            max_epochs: 3,
            patience: 10,
            seed,
            freeze_encoder: false,
        };
        let mut corpus = PretrainCorpus::default();
        for k in 0..2 {
            let t = generate_synthetic(100 + 10 * seed + k, &SyntheticSpec {
                length: 3 * WEEK,
                noise_std: 0.1,
                ..Default::default()
            });
            let p = prepare(&t, spec, DEFAULT_SPLIT, false).unwrap();
            corpus.push(format!("g{k}"), p.train().to_vec(), p.validation().to_vec(), 1.0);
        }
        let pre = pretrain(&corpus, &cfg, &TrainConfig { max_epochs: 8, ..tc.clone() }).unwrap();

        let target = generate_synthetic(seed, &SyntheticSpec {
            length: 3 * WEEK,
            driver_coef: 0.5,
            ..Default::default()
        });
        let data = prepare(&target, spec, DEFAULT_SPLIT, false).unwrap();
        let ft = finetune(&pre.params, &cfg, data.train(), data.validation(), &tc).unwrap();
        let sc = train(init_model(&cfg, seed).unwrap(), &cfg, data.train(), data.validation(), &tc).unwrap();
        pre_loss.push(ft.report.epochs[2].validation_loss);
        scratch_loss.push(sc.report.epochs[2].validation_loss);
    }
    let (p, s) = (median(pre_loss.clone()), median(scratch_loss.clone()));
    assert!(p <= s, "pretrained {pre_loss:?} vs scratch {scratch_loss:?}");
}

/// Averaging a 168-periodic series over non-overlapping 168-step windows
/// cancels the period, so the weekly branch only sees the level and the
/// original scale carries the signal. Measured importances are about
/// 0.98 / 0.01 / 0.01 (original / daily / weekly). Kept runnable with
/// `--ignored`; see `weekly_average_cancels_weekly_period` for the cause.
#[test]
#[ignore = "weekly averaging removes a 168-periodic signal; fails by construction"]
fn weekly_scale_dominates_on_weekly_signal() {
    let cfg = model(2 * WEEK, 48, &[1, 24, WEEK], 0);
    let spec = WindowSpec::new(2 * WEEK, 48);
    let mut report: Vec<Vec<f64>> = Vec::new();
    for seed in [1u64, 2, 3] {
        let t = generate_synthetic(seed, &SyntheticSpec {
            length: 5 * WEEK,
            daily_amplitude: 0.0,
            weekly_amplitude: 1.0,
            noise_std: 0.05,
            ..Default::default()
        });
        let data = prepare(&t, spec, DEFAULT_SPLIT, false).unwrap();
        let tc = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 16,
            max_epochs: 20,
            patience: 4,
            seed,
            freeze_encoder: false,
        };
        let out = train(init_model(&cfg, seed).unwrap(), &cfg, data.train(), data.validation(), &tc).unwrap();
        let imp = scale_importance(&out.params, &cfg, data.validation(), 48).unwrap();
        report.push(imp.importance);
    }
    let med: Vec<f64> = (0..3).map(|s| median(report.iter().map(|r| r[s]).collect())).collect();
    assert!(med[2] > med[0] && med[2] > med[1], "median importances {med:?}, per seed {report:?}");
}

#[test]
fn weekly_average_cancels_weekly_period() {
    let t = generate_synthetic(1, &SyntheticSpec {
        length: 5 * WEEK,
        daily_amplitude: 0.0,
        weekly_amplitude: 1.0,
        noise_std: 0.0,
        ..Default::default()
    });
    let data = prepare(&t, WindowSpec { instance_norm: false, ..WindowSpec::new(2 * WEEK, 48) }, DEFAULT_SPLIT, false).unwrap();
    let spread = |w: usize| {
        let v: Vec<f64> = data
            .windows
            .iter()
            .map(|s| scale_transform(&s.x, w).unwrap().data()[0])
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    // the phase is visible at the original resolution but not after weekly averaging
    assert!(spread(1) > 0.5);
    assert!(spread(WEEK) < 1e-9, "{}", spread(WEEK));
}
