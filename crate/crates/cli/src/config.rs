//! Experiment configuration (TOML).
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use multipatch::data::{Schema, SyntheticSpec, DEFAULT_SPLIT};
use multipatch::patching::DEFAULT_MAX_PATCH;
use multipatch::training::TrainConfig;
use multipatch::uncertainty::{CrpsMethod, EvalOptions, IntervalMethod, Units, DEFAULT_MC_SAMPLES};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds data generation, initialization, shuffling, dropout and MC passes.
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub pretraining: PretrainingSection,
    pub uncertainty: UncertaintySection,
    pub evaluation: EvaluationSection,
    pub ablation: AblationToggles,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            pretraining: PretrainingSection::default(),
            uncertainty: UncertaintySection::default(),
            evaluation: EvaluationSection::default(),
            ablation: AblationToggles::default(),
        }
    }
}

/// Where the target series comes from and how it is windowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// CSV file. When absent the synthetic generator supplies the series.
    pub path: Option<PathBuf>,
    /// Target columns. Empty means the last value column is the target and
    /// all other value columns are future-known.
    pub target: Vec<String>,
    /// Future-known columns (only with an explicit `target` list).
    pub future: Vec<String>,
    pub synthetic: SyntheticSpec,
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Train/validation/test fractions of the window index space.
    pub split: [f64; 3],
    /// Drop lookback-overlapping windows at the start of validation and test.
    pub purge: bool,
    pub instance_norm: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            target: Vec::new(),
            future: Vec::new(),
            synthetic: SyntheticSpec::default(),
            lookback: 336,
            horizon: 96,
            stride: 1,
            split: DEFAULT_SPLIT,
            purge: false,
            instance_norm: true,
        }
    }
}

impl DataSection {
    pub fn schema(&self) -> Schema {
        if self.target.is_empty() {
            Schema::LastTargetRestFuture
        } else {
            Schema::explicit(&self.target, &self.future)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// λ, the weight of the Gaussian NLL term.
    pub nll_weight: f64,
    pub variance_floor: f64,
    /// Averaging windows of the scales. Absent: 1/24/168 for hourly data,
    /// 1/4/16 otherwise.
    pub scale_windows: Option<Vec<usize>>,
    pub max_patch: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            ff_dim: 128,
            dropout: 0.1,
            nll_weight: 0.5,
            variance_floor: 1e-6,
            scale_windows: None,
            max_patch: DEFAULT_MAX_PATCH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Keep the encoder fixed while finetuning.
    pub freeze_encoder: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            freeze_encoder: t.freeze_encoder,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            freeze_encoder: self.freeze_encoder,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainingSection {
    pub datasets: Vec<CorpusDataset>,
    /// Epoch budget of the pretraining stage; absent uses `training.max_epochs`.
    pub max_epochs: Option<usize>,
}

/// One pretraining dataset: a CSV file or a synthetic series. Windowing
/// follows the `data` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusDataset {
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub target: Vec<String>,
    pub synthetic: Option<SyntheticSpec>,
    /// Generator seed; absent means the experiment seed plus the dataset's
    /// 1-based position.
    pub seed: Option<u64>,
    pub weight: f64,
}

impl Default for CorpusDataset {
    fn default() -> Self {
        Self {
            name: None,
            path: None,
            target: Vec::new(),
            synthetic: None,
            seed: None,
            weight: 1.0,
        }
    }
}

impl CorpusDataset {
    pub fn label(&self, index: usize) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.path {
            Some(p) => p.display().to_string(),
            None => format!("synthetic{index}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySection {
    /// Monte Carlo dropout passes `M`.
    pub mc_samples: usize,
    pub level: f64,
    pub units: Units,
    pub interval: IntervalMethod,
    pub crps: CrpsMethod,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self {
            mc_samples: DEFAULT_MC_SAMPLES,
            level: 0.95,
            units: Units::Normalized,
            interval: IntervalMethod::Gaussian,
            crps: CrpsMethod::Gaussian,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Horizons to score. Empty means the model's horizon only.
    pub horizons: Vec<usize>,
    /// Report the persistence baseline alongside the model.
    pub baseline: bool,
}

/// Components of the full model. Each switch maps to one ablation row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationToggles {
    /// Off: only the original (w = 1) scale.
    pub multi_scale: bool,
    /// Off: no future-known covariate pathway.
    pub future_variables: bool,
    /// Off: pure MSE training (λ = 0) and a single deterministic pass.
    pub mc_dropout: bool,
    /// Off: train from scratch instead of finetuning a pretrained model.
    pub pretraining: bool,
}

impl Default for AblationToggles {
    fn default() -> Self {
        Self {
            multi_scale: true,
            future_variables: true,
            mc_dropout: true,
            pretraining: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read configuration {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        let d = &self.data;
        if d.lookback == 0 || d.horizon == 0 || d.stride == 0 {
            return bad("data.lookback, data.horizon and data.stride must be positive".into());
        }
        if d.target.is_empty() && !d.future.is_empty() {
            return bad("data.future requires an explicit data.target list".into());
        }
        if d.split.iter().any(|r| !(*r >= 0.0)) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("data.split {:?} must be non-negative and sum to 1", d.split));
        }
        self.training
            .train_config(self.seed)
            .validate()
            .map_err(|e| CliError::Usage(format!("training: {e}")))?;
        let u = &self.uncertainty;
        if !(u.level > 0.0 && u.level < 1.0) {
            return bad(format!("uncertainty.level {} must lie in (0, 1)", u.level));
        }
        if let Some(w) = &self.model.scale_windows {
            if w.is_empty() || w.contains(&0) {
                return bad("model.scale_windows must be non-empty and positive".into());
            }
        }
        if self.model.max_patch == 0 {
            return bad("model.max_patch must be positive".into());
        }
        if self.evaluation.horizons.contains(&0) {
            return bad("evaluation.horizons must be positive".into());
        }
        for (i, ds) in self.pretraining.datasets.iter().enumerate() {
            if ds.path.is_some() == ds.synthetic.is_some() {
                return bad(format!(
                    "pretraining dataset {i} needs exactly one of `path` and `synthetic`"
                ));
            }
            if !(ds.weight >= 0.0 && ds.weight.is_finite()) {
                return bad(format!("pretraining dataset {i} has invalid weight {}", ds.weight));
            }
        }
        Ok(())
    }

    /// Evaluation options for a run with the given toggles.
    pub fn eval_options(&self, toggles: &AblationToggles) -> EvalOptions {
        let u = &self.uncertainty;
        EvalOptions {
            horizon: None,
            mc_samples: if toggles.mc_dropout { u.mc_samples } else { 0 },
            seed: self.seed,
            level: u.level,
            units: u.units,
            interval: u.interval,
            crps: u.crps,
        }
    }
}
