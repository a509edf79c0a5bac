use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{compute_gradients, TrainBatch};
use super::loss::LossConfig;
use super::optim::{linear_decay, AdamW, AdamWConfig};
use super::TrainError;
use crate::augment::Query;
use crate::encoder::{Checkpoint, EncoderConfig, EncoderModel, TokenSequence};
use crate::features::Featurizer;
use crate::kg::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Upper bound; lowered to the number of queries when that is smaller.
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    /// Save both towers every this many epochs (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 50,
            batch_size: 256,
            seed: 42,
            optimizer: AdamWConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(TrainError::Config("batch size must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub query: EncoderModel,
    pub entity: EncoderModel,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub checkpoints: Vec<PathBuf>,
}

/// Visiting order of `n` items in `epoch`; depends only on its arguments.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Chunks `order` into batches, dropping later queries whose answer is
/// already in the chunk. Chunks left with fewer than two queries are skipped.
pub fn plan_batches(answers: &[EntityId], order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    order
        .chunks(batch_size)
        .map(|chunk| {
            let mut seen = HashSet::new();
            chunk
                .iter()
                .copied()
                .filter(|&i| seen.insert(answers[i]))
                .collect::<Vec<_>>()
        })
        .filter(|b| b.len() >= 2)
        .collect()
}

/// Trains a fresh pair of towers, both initialized from `train.seed`.
pub fn fit(
    features: &Featurizer<'_>,
    queries: &[Query],
    train: &TrainConfig,
    loss: &LossConfig,
    encoder: &EncoderConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<FitOutcome, TrainError> {
    let query = EncoderModel::new(*encoder, train.seed);
    let entity = query.clone();
    fit_from(features, queries, train, loss, query, entity, checkpoint_dir)
}

/// Like [`fit`], starting from the given towers.
pub fn fit_from(
    features: &Featurizer<'_>,
    queries: &[Query],
    train: &TrainConfig,
    loss: &LossConfig,
    mut query: EncoderModel,
    mut entity: EncoderModel,
    checkpoint_dir: Option<&Path>,
) -> Result<FitOutcome, TrainError> {
    train.validate()?;
    loss.validate()?;
    if queries.is_empty() {
        return Err(TrainError::Config("no training queries".into()));
    }
    if query.config().vocab_size != features.vocab.len() {
        return Err(TrainError::Config(format!(
            "encoder vocabulary size {} differs from the vocabulary ({})",
            query.config().vocab_size,
            features.vocab.len()
        )));
    }
    let query_seqs: Vec<TokenSequence> = queries
        .iter()
        .map(|q| features.query_sequence(q))
        .collect::<Result<_, _>>()?;
    let entity_seqs = features.entity_sequences()?;
    let answers: Vec<EntityId> = queries.iter().map(|q| q.answer).collect();

    let batch_size = train.batch_size.min(queries.len()).max(2);
    let chunks_per_epoch = queries.len().div_ceil(batch_size);
    let total_steps = chunks_per_epoch * train.epochs;
    let mut q_opt = AdamW::new(train.optimizer);
    let mut e_opt = AdamW::new(train.optimizer);
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let mut checkpoints = Vec::new();

    for epoch in 0..train.epochs {
        let order = epoch_order(queries.len(), train.seed, epoch);
        let batches = plan_batches(&answers, &order, batch_size);
        let mut loss_sum = 0.0;
        for members in &batches {
            let batch = TrainBatch::new(
                members.iter().map(|&i| query_seqs[i].clone()).collect(),
                members
                    .iter()
                    .map(|&i| entity_seqs[answers[i].index()].clone())
                    .collect(),
            )?;
            let (batch_loss, grads) = compute_gradients(&query, &entity, &batch, loss)?;
            let lr = linear_decay(train.learning_rate, step, total_steps);
            let positions = query.config().positions;
            q_opt.step(query.tensors_mut(), grads.query.tensors(positions), lr);
            e_opt.step(entity.tensors_mut(), grads.entity.tensors(positions), lr);
            loss_sum += batch_loss;
            step += 1;
        }
        if !query.is_finite() || !entity.is_finite() {
            return Err(TrainError::NonFinite(format!(
                "parameters after epoch {}",
                epoch + 1
            )));
        }
        let mean = if batches.is_empty() {
            f64::NAN
        } else {
            loss_sum / batches.len() as f64
        };
        log::info!("epoch {}/{}: mean loss {mean:.6}", epoch + 1, train.epochs);
        epoch_losses.push(mean);
        if let Some(dir) = checkpoint_dir {
            if train.checkpoint_every > 0 && (epoch + 1) % train.checkpoint_every == 0 {
                let path = dir.join(format!("epoch-{:03}.bin", epoch + 1));
                Checkpoint::new(features.mode, query.clone(), entity.clone())?.save(&path)?;
                checkpoints.push(path);
            }
        }
    }
    Ok(FitOutcome {
        query,
        entity,
        epoch_losses,
        steps: step,
        checkpoints,
    })
}
