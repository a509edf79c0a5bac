//! Contrastive training of the two towers with in-batch negatives.

mod fit;
mod grad;
mod loss;
mod optim;

pub use fit::{epoch_order, fit, fit_from, plan_batches, FitOutcome, TrainConfig};
pub use grad::{batch_loss, compute_gradients, score_batch, score_pooled, Gradients, TrainBatch};
pub use loss::{info_nce_loss, info_nce_loss_and_grad, LossConfig, MarginMode};
pub use optim::{linear_decay, AdamW, AdamWConfig};

use crate::encoder::EncoderError;
use crate::features::FeatureError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}
