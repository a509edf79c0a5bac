//! Text-based knowledge graph completion.
//!
//! Queries are built in both directions through curated inverse relations,
//! optionally enriched with generated descriptions of the expected answer,
//! and scored by a two-tower encoder trained with a contrastive loss. Ranking
//! follows the filtered protocol.

pub mod augment;
pub mod describe;
pub mod encoder;
pub mod eval;
pub mod features;
pub mod kg;
pub mod linalg;
pub mod train;

pub use augment::{symmetrize, InverseRegistry, Query, RegistryEntry, RegistryError};
pub use describe::{DescriptionCache, Descriptions, PredictiveDescription, Provenance, QueryKey};
pub use encoder::{
    cosine_similarity, Checkpoint, EncoderConfig, EncoderModel, Pooling, PositionKind, SequenceMode,
    TokenSequence, Vocabulary,
};
pub use eval::{evaluate_split, CandidateMatrix, Evaluation, Metrics, MetricsReport};
pub use features::{build_vocabulary, Featurizer};
pub use kg::{Direction, Entity, EntityId, FilterIndex, KnowledgeGraph, Relation, RelationId, Split, Triple};
pub use train::{fit, LossConfig, MarginMode, TrainConfig};
