//! Inputs shared by the benchmarks.

use kermit_core::encoder::{entity_sequence_from_ids, query_sequence_from_ids};
use kermit_core::train::TrainBatch;
use kermit_core::{SequenceMode, TokenSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn words(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(4..vocab as u32)).collect()
}

/// Full-layout query sequences whose blocks fill most of `max_len`.
pub fn query_sequences(n: usize, vocab: usize, max_len: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let h = words(&mut rng, max_len / 3, vocab);
            let r = words(&mut rng, 3, vocab);
            let p = words(&mut rng, max_len / 2, vocab);
            query_sequence_from_ids(&h, &r, Some(&p), SequenceMode::Full, max_len).expect("fits")
        })
        .collect()
}

pub fn entity_sequences(n: usize, vocab: usize, max_len: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(4..max_len);
            entity_sequence_from_ids(&words(&mut rng, len, vocab), max_len).expect("fits")
        })
        .collect()
}

pub fn batch(b: usize, vocab: usize, max_len: usize, seed: u64) -> TrainBatch {
    TrainBatch::new(
        query_sequences(b, vocab, max_len, seed),
        entity_sequences(b, vocab, max_len, seed + 1),
    )
    .expect("b >= 2")
}
