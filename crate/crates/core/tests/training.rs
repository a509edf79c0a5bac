mod common;

use common::toy;
use kermit_core::features::FeatureError;
use kermit_core::train::{epoch_order, fit, plan_batches, TrainError};
use kermit_core::{
    build_vocabulary, Checkpoint, Descriptions, EncoderConfig, EntityId, Featurizer, LossConfig,
    SequenceMode, TrainConfig,
};
use proptest::prelude::*;

fn short(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        ..TrainConfig::default()
    }
}

#[test]
fn loss_falls_over_the_first_epochs() {
    let t = toy(42, 50, 4);
    let vocab = build_vocabulary(&t.graph, Some(&t.descriptions), 2);
    let f = Featurizer::new(&t.graph, &vocab, SequenceMode::Full, 64, Some(&t.descriptions));
    let cfg = EncoderConfig::shallow(vocab.len(), 32, 64);
    let out = fit(&f, &t.train, &short(5), &LossConfig::default(), &cfg, None).unwrap();
    assert_eq!(out.epoch_losses.len(), 5);
    assert!(
        out.epoch_losses[4] < out.epoch_losses[0],
        "{:?}",
        out.epoch_losses
    );
    assert_ne!(out.query, out.entity);
    assert_eq!(out.steps, 5 * t.train.len().div_ceil(32));
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let t = toy(42, 30, 3);
    let vocab = build_vocabulary(&t.graph, Some(&t.descriptions), 2);
    let f = Featurizer::new(&t.graph, &vocab, SequenceMode::Full, 64, Some(&t.descriptions));
    let cfg = EncoderConfig::shallow(vocab.len(), 16, 64);
    let train = TrainConfig {
        checkpoint_every: 1,
        ..short(2)
    };
    let run = |dir: &std::path::Path| {
        fit(&f, &t.train, &train, &LossConfig::default(), &cfg, Some(dir))
            .unwrap()
            .checkpoints
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (run(a.path()), run(b.path()));
    assert_eq!(ca.len(), 2);
    for (x, y) in ca.iter().zip(&cb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(Checkpoint::load(&ca[1]).unwrap().mode, SequenceMode::Full);

    let other = TrainConfig { seed: 7, ..train };
    let c = tempfile::tempdir().unwrap();
    let cc = fit(&f, &t.train, &other, &LossConfig::default(), &cfg, Some(c.path()))
        .unwrap()
        .checkpoints;
    assert_ne!(std::fs::read(&ca[1]).unwrap(), std::fs::read(&cc[1]).unwrap());
}

#[test]
fn full_mode_without_descriptions_names_the_query() {
    let t = toy(1, 20, 2);
    let empty = Descriptions::new();
    let vocab = build_vocabulary(&t.graph, None, 2);
    let f = Featurizer::new(&t.graph, &vocab, SequenceMode::Full, 64, Some(&empty));
    let cfg = EncoderConfig::shallow(vocab.len(), 8, 64);
    match fit(&f, &t.train, &short(1), &LossConfig::default(), &cfg, None) {
        Err(TrainError::Feature(FeatureError::MissingDescription(key))) => {
            assert_eq!(key.source, t.graph.entity(t.train[0].source).raw_key);
        }
        other => panic!(
            "expected a missing-description error, got {:?}",
            other.map(|o| o.steps)
        ),
    }
}

#[test]
fn bad_configurations_are_rejected() {
    let t = toy(1, 20, 2);
    let vocab = build_vocabulary(&t.graph, None, 2);
    let f = Featurizer::new(&t.graph, &vocab, SequenceMode::Baseline, 64, None);
    let cfg = EncoderConfig::shallow(vocab.len(), 8, 64);
    let loss = LossConfig::default();
    assert!(matches!(
        fit(&f, &[], &short(1), &loss, &cfg, None),
        Err(TrainError::Config(_))
    ));
    let zero_lr = TrainConfig {
        learning_rate: 0.0,
        ..short(1)
    };
    assert!(matches!(
        fit(&f, &t.train, &zero_lr, &loss, &cfg, None),
        Err(TrainError::Config(_))
    ));
    let bad_tau = LossConfig { tau: -1.0, ..loss };
    assert!(matches!(
        fit(&f, &t.train, &short(1), &bad_tau, &cfg, None),
        Err(TrainError::Config(_))
    ));
    let wrong_vocab = EncoderConfig::shallow(vocab.len() + 1, 8, 64);
    assert!(matches!(
        fit(&f, &t.train, &short(1), &loss, &wrong_vocab, None),
        Err(TrainError::Config(_))
    ));
}

#[test]
fn duplicate_answers_in_a_chunk_keep_the_first() {
    let answers: Vec<EntityId> = [3, 3, 5, 3, 7, 8, 8, 1].map(EntityId).to_vec();
    let order: Vec<usize> = (0..8).collect();
    assert_eq!(plan_batches(&answers, &order, 4), vec![vec![0, 2], vec![4, 5, 7]]);
    // a chunk that collapses to one pair is skipped
    assert_eq!(
        plan_batches(&[EntityId(1), EntityId(1), EntityId(2)], &[0, 1, 2], 2),
        vec![] as Vec<Vec<usize>>
    );
}

proptest! {
    #[test]
    fn shuffles_depend_only_on_seed_and_epoch(n in 1usize..200, seed in any::<u64>(), epoch in 0usize..100) {
        let a = epoch_order(n, seed, epoch);
        prop_assert_eq!(&a, &epoch_order(n, seed, epoch));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }
}
