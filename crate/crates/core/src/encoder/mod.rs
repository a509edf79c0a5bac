//! Tokenization, query/entity token sequences with segment ids, and the
//! trainable embedding encoder.

mod attention;
mod checkpoint;
mod model;
mod sequence;
mod vocab;

use std::path::PathBuf;

pub use attention::{AttentionGrad, AttentionLayer, AttentionTrace};
pub use checkpoint::{hex_digest, Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use model::{
    cosine_similarity, cosine_with_norms, pool, EncodedSequence, EncoderConfig, EncoderGrads, EncoderModel,
    ForwardTrace, Pooling, PositionKind, SequenceGrad, INIT_STD, SEGMENTS,
};
pub use sequence::{
    build_entity_sequence, build_query_sequence, entity_sequence_from_ids, query_sequence_from_ids,
    SequenceMode, TokenSequence, DEFAULT_MAX_LEN,
};
pub use vocab::{split_words, tokenize, Vocabulary, CLS, PAD, SEP, UNK};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_MIN_FREQ: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("max_len {max_len} cannot hold the {needed} special tokens")]
    MaxLenTooSmall { max_len: usize, needed: usize },
    #[error("{0} mode needs a non-empty predictive description")]
    MissingPrediction(SequenceMode),
    #[error("token id {id} is outside a vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
