//! Losses, the optimizer, training loops and checkpoints.

mod checkpoint;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, ChannelNames, Checkpoint, CHECKPOINT_VERSION};
pub use loss::{combined_loss, combined_value, mse_loss, mse_value, nll_loss, nll_value};
pub use optim::{optimizer_step, Gradients, Moments, OptimizerState};
pub use trainer::{
    config_hash, evaluate_loss, finetune, loss_gradients, pretrain, train, CorpusEntry, EpochRecord,
    PretrainCorpus, TrainConfig, TrainOutcome, TrainReport,
};
