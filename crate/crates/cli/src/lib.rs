//! Configuration-driven harness around the `multipatch` library: synthetic
//! data, pretraining, finetuning, evaluation, forecasting and ablations.

pub mod commands;
pub mod config;
pub mod data;
pub mod report;

pub use commands::{
    cmd_ablate, cmd_evaluate, cmd_finetune, cmd_forecast, cmd_pretrain, cmd_synth, AblationRow, AblationTable,
    EvaluationOutput, ForecastOutput, ForecastRow, SynthOutput, TrainOutput, Variant,
};
pub use config::{
    AblationToggles, CorpusDataset, DataSection, EvaluationSection, ExperimentConfig, ModelSection,
    PretrainingSection, TrainingSection, UncertaintySection,
};

/// Exit status 2 for usage and configuration problems, 1 for everything
/// that fails while running.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] multipatch::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(multipatch::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
