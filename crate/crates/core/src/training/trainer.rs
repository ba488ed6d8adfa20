//! Mini-batch training loops: plain training, weighted multi-dataset
//! pretraining and finetuning.

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::combined_loss;
use super::optim::{optimizer_step, Gradients, OptimizerState};
use crate::autodiff::{Graph, Mode};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::{adapt_parameters, forward_graph, is_encoder_param, Bindings, ForwardOptions, ModelConfig, ModelParameters};
use crate::rng::{self, Rng};

/// Samples evaluated together before their gradients are summed. The sum
/// always runs in sample order, so results do not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Keep patch embeddings, positional embeddings and transformer layers
    /// fixed (finetuning only).
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// Loss history of one run. Wall-clock time is kept out of the serialized
/// form (and from equality) so that reruns produce identical files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub config_hash: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation_loss: Option<f64>,
    /// Epoch after which patience ran out, if it did.
    pub early_stop_epoch: Option<usize>,
    /// Where the best parameters were written, when the caller saved them.
    pub best_checkpoint: Option<String>,
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.config_hash == other.config_hash
            && self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
            && self.best_validation_loss == other.best_validation_loss
            && self.early_stop_epoch == other.early_stop_epoch
            && self.best_checkpoint == other.best_checkpoint
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the starting parameters when
    /// no epoch ran).
    pub params: ModelParameters,
    pub report: TrainReport,
}

/// One dataset of a pretraining corpus.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    /// Sampling probability is proportional to the weight; each batch loss
    /// is also scaled by it.
    pub weight: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PretrainCorpus {
    pub entries: Vec<CorpusEntry>,
}

impl PretrainCorpus {
    pub fn push(&mut self, name: impl Into<String>, train: Vec<WindowSample>, validation: Vec<WindowSample>, weight: f64) {
        self.entries.push(CorpusEntry {
            name: name.into(),
            train,
            validation,
            weight,
        });
    }
}

/// FNV hash of the serialized configurations, as 16 hex digits.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let bytes = serde_json::to_vec(&(model, train)).expect("configs serialize");
    format!("{:016x}", rng::stable_hash(&bytes))
}

struct Set<'a> {
    train: &'a [WindowSample],
    validation: &'a [WindowSample],
    weight: f64,
}

/// Combined loss and parameter gradients of one window.
fn sample_gradient(
    params: &ModelParameters,
    cfg: &ModelConfig,
    sample: &WindowSample,
    rng: &mut Rng,
    trainable: &(dyn Fn(&str) -> bool + Sync),
) -> Result<(f64, Vec<(String, crate::Tensor)>)> {
    let mut g = Graph::new();
    let mut b = Bindings::new(params, true);
    let input = sample.model_input();
    let target = g.constant(sample.model_target());
    let (m, v) = forward_graph(&mut g, &mut b, cfg, &input, sample.z.as_ref(), &ForwardOptions::train(), rng)?;
    let loss = combined_loss(&mut g, target, m, v, cfg.nll_weight)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    let grads = b
        .bound()
        .filter(|(name, _)| trainable(name))
        .map(|(name, var)| (name.to_string(), g.grad(var).expect("parameters are tracked")))
        .collect();
    Ok((value, grads))
}

/// Mean loss and mean gradient over `batch`, each scaled by `weight`.
fn batch_gradient(
    params: &ModelParameters,
    cfg: &ModelConfig,
    batch: &[&WindowSample],
    batch_seed: u64,
    weight: f64,
    trainable: &(dyn Fn(&str) -> bool + Sync),
) -> Result<(f64, Gradients)> {
    let mut loss = 0.0;
    let mut grads = Gradients::new();
    for (c, chunk) in batch.chunks(CHUNK).enumerate() {
        let results: Vec<_> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut r = rng::indexed(batch_seed, (c * CHUNK + i) as u64);
                sample_gradient(params, cfg, s, &mut r, trainable)
            })
            .collect();
        for res in results {
            let (l, gs) = res?;
            loss += l;
            for (name, g) in gs {
                match grads.get_mut(&name) {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                    None => {
                        grads.insert(name, g);
                    }
                }
            }
        }
    }
    let scale = weight / batch.len() as f64;
    for g in grads.values_mut() {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, grads))
}

/// Mean combined loss over `samples` with dropout off.
pub fn evaluate_loss(params: &ModelParameters, cfg: &ModelConfig, samples: &[WindowSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Training("cannot evaluate loss on an empty split".into()));
    }
    let losses: Vec<Result<f64>> = samples
        .par_iter()
        .map(|s| {
            let mut g = Graph::new();
            let mut b = Bindings::new(params, false);
            let input = s.model_input();
            let target = g.constant(s.model_target());
            let opts = ForwardOptions::new(Mode::Eval);
            let (m, v) = forward_graph(&mut g, &mut b, cfg, &input, s.z.as_ref(), &opts, &mut rng::seeded(0))?;
            let l = combined_loss(&mut g, target, m, v, cfg.nll_weight)?;
            Ok(g.value(l).item())
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

fn weighted_validation(params: &ModelParameters, cfg: &ModelConfig, sets: &[Set]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in sets.iter().filter(|s| s.weight > 0.0) {
        num += s.weight * evaluate_loss(params, cfg, s.validation)?;
        den += s.weight;
    }
    Ok(num / den)
}

fn run(
    mut params: ModelParameters,
    cfg: &ModelConfig,
    sets: &[Set],
    tc: &TrainConfig,
    trainable: &(dyn Fn(&str) -> bool + Sync),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    if sets.iter().all(|s| !(s.weight > 0.0)) {
        return Err(Error::Config("at least one dataset needs a positive weight".into()));
    }
    for (i, s) in sets.iter().enumerate() {
        if !(s.weight >= 0.0) || !s.weight.is_finite() {
            return Err(Error::Config(format!("dataset {i} has invalid weight {}", s.weight)));
        }
        if s.weight > 0.0 && (s.train.is_empty() || s.validation.is_empty()) {
            return Err(Error::Training(format!(
                "dataset {i} needs non-empty training and validation splits ({} / {} windows)",
                s.train.len(),
                s.validation.len()
            )));
        }
        for w in s.train.iter().chain(s.validation) {
            if w.channels() != cfg.channels {
                return Err(Error::Config(format!(
                    "dataset {i} has {} target channels, model expects {}",
                    w.channels(),
                    cfg.channels
                )));
            }
        }
    }

    let weights: Vec<f64> = sets.iter().map(|s| s.weight).collect();
    let total_w: f64 = weights.iter().sum();
    let mean_len = sets.iter().map(|s| s.weight * s.train.len() as f64).sum::<f64>() / total_w;
    let batches = ((mean_len / tc.batch_size as f64).ceil() as usize).max(1);
    let chooser = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("dataset weights: {e}")))?;

    let mut pick_rng = rng::labeled(tc.seed, "dataset");
    let mut dropout_rng = rng::labeled(tc.seed, "dropout");
    let mut shuffle_rngs: Vec<Rng> = (0..sets.len())
        .map(|d| rng::labeled(tc.seed, &format!("shuffle{d}")))
        .collect();
    let mut queues: Vec<VecDeque<usize>> = vec![VecDeque::new(); sets.len()];
    let refill = |q: &mut VecDeque<usize>, n: usize, r: &mut Rng| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(r);
        *q = order.into();
    };

    let mut state = OptimizerState::new(tc.learning_rate);
    let mut report = TrainReport {
        seed: tc.seed,
        config_hash: config_hash(cfg, tc),
        epochs: Vec::new(),
        best_epoch: None,
        best_validation_loss: None,
        early_stop_epoch: None,
        best_checkpoint: None,
        epoch_seconds: Vec::new(),
    };
    let mut best = params.clone();
    let mut since_best = 0;

    for epoch in 0..tc.max_epochs {
        let started = Instant::now();
        for (d, s) in sets.iter().enumerate() {
            refill(&mut queues[d], s.train.len(), &mut shuffle_rngs[d]);
        }
        let mut epoch_loss = 0.0;
        for b in 0..batches {
            let d = chooser.sample(&mut pick_rng);
            let set = &sets[d];
            if queues[d].is_empty() {
                refill(&mut queues[d], set.train.len(), &mut shuffle_rngs[d]);
            }
            let take = tc.batch_size.min(queues[d].len());
            let batch: Vec<&WindowSample> = queues[d].drain(..take).map(|i| &set.train[i]).collect();
            let batch_seed = dropout_rng.next_u64();
            let (loss, mut grads) = batch_gradient(&params, cfg, &batch, batch_seed, set.weight, trainable)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite training loss at epoch {epoch}, batch {b}"
                )));
            }
            optimizer_step(&mut params, &mut grads, &mut state)?;
            epoch_loss += loss;
        }
        let train_loss = epoch_loss / batches as f64;
        let validation_loss = weighted_validation(&params, cfg, sets)?;
        if !validation_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        log::info!("epoch {epoch}: train {train_loss:.6} validation {validation_loss:.6}");
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        if report.best_validation_loss.map_or(true, |b| validation_loss < b) {
            report.best_validation_loss = Some(validation_loss);
            report.best_epoch = Some(epoch);
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > tc.patience {
                report.early_stop_epoch = Some(epoch);
                break;
            }
        }
    }
    Ok(TrainOutcome { params: best, report })
}

/// Trains `params` on one dataset.
pub fn train(
    params: ModelParameters,
    cfg: &ModelConfig,
    train: &[WindowSample],
    validation: &[WindowSample],
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    let sets = [Set {
        train,
        validation,
        weight: 1.0,
    }];
    run(params, cfg, &sets, tc, &|_| true)
}

/// Pretrains a fresh model on a weighted corpus with the future pathway
/// disabled. Parameters are drawn from `tc.seed`.
pub fn pretrain(corpus: &PretrainCorpus, cfg: &ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    if corpus.entries.is_empty() {
        return Err(Error::Config("pretraining corpus is empty".into()));
    }
    let mut cfg = cfg.clone();
    cfg.future_channels = 0;
    let params = crate::model::init_model(&cfg, tc.seed)?;
    let sets: Vec<Set> = corpus
        .entries
        .iter()
        .map(|e| Set {
            train: &e.train,
            validation: &e.validation,
            weight: e.weight,
        })
        .collect();
    run(params, &cfg, &sets, tc, &|_| true)
}

/// Continues training from pretrained parameters. The future pathway is
/// initialized from `tc.seed` when the checkpoint lacks it.
pub fn finetune(
    pretrained: &ModelParameters,
    cfg: &ModelConfig,
    train: &[WindowSample],
    validation: &[WindowSample],
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = adapt_parameters(pretrained, cfg, tc.seed)?;
    let sets = [Set {
        train,
        validation,
        weight: 1.0,
    }];
    if tc.freeze_encoder {
        run(params, cfg, &sets, tc, &|n| !is_encoder_param(n))
    } else {
        run(params, cfg, &sets, tc, &|_| true)
    }
}

/// Per-parameter gradients of the combined loss on one window, for
/// inspection and gradient checking.
pub fn loss_gradients(
    params: &ModelParameters,
    cfg: &ModelConfig,
    sample: &WindowSample,
    rng: &mut Rng,
) -> Result<(f64, BTreeMap<String, crate::Tensor>)> {
    let (l, g) = sample_gradient(params, cfg, sample, rng, &|_| true)?;
    Ok((l, g.into_iter().collect()))
}
