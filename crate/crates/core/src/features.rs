//! Turns graph entities and queries into token sequences for a given layout.

use crate::augment::Query;
use crate::describe::{Descriptions, QueryKey};
use crate::encoder::{
    entity_sequence_from_ids, query_sequence_from_ids, EncoderError, SequenceMode, TokenSequence, Vocabulary,
};
use crate::kg::{EntityId, KnowledgeGraph};

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("no predictive description for query {0}")]
    MissingDescription(QueryKey),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Vocabulary over every entity text, every relation name and the given
/// predictive descriptions.
pub fn build_vocabulary(
    graph: &KnowledgeGraph,
    descriptions: Option<&Descriptions>,
    min_freq: usize,
) -> Vocabulary {
    let entity_texts: Vec<String> = graph.entities().iter().map(|e| e.text()).collect();
    let corpus = entity_texts
        .iter()
        .map(String::as_str)
        .chain(graph.relations().iter().map(|r| r.name.as_str()))
        .chain(descriptions.into_iter().flat_map(|d| d.texts()));
    Vocabulary::build(corpus, min_freq)
}

/// Sequence builder bound to one graph, vocabulary and query layout.
pub struct Featurizer<'a> {
    pub graph: &'a KnowledgeGraph,
    pub vocab: &'a Vocabulary,
    pub mode: SequenceMode,
    pub max_len: usize,
    pub descriptions: Option<&'a Descriptions>,
}

impl<'a> Featurizer<'a> {
    pub fn new(
        graph: &'a KnowledgeGraph,
        vocab: &'a Vocabulary,
        mode: SequenceMode,
        max_len: usize,
        descriptions: Option<&'a Descriptions>,
    ) -> Self {
        Self {
            graph,
            vocab,
            mode,
            max_len,
            descriptions,
        }
    }

    pub fn description(&self, query: &Query) -> Result<Option<&'a str>, FeatureError> {
        if !self.mode.needs_descriptions() {
            return Ok(None);
        }
        let key = QueryKey::of(self.graph, query);
        match self.descriptions.and_then(|d| d.get(&key)) {
            Some(text) if !text.trim().is_empty() => Ok(Some(text)),
            _ => Err(FeatureError::MissingDescription(key)),
        }
    }

    /// `H` is the source entity text, `R` the relation as posed (the inverse
    /// name for backward queries), `P` the cached description.
    pub fn query_sequence(&self, query: &Query) -> Result<TokenSequence, FeatureError> {
        let prediction = self.description(query)?.map(|t| self.vocab.tokenize(t));
        let head = self.vocab.tokenize(&self.graph.entity(query.source).text());
        let relation = self.vocab.tokenize(&self.graph.relation(query.relation).name);
        Ok(query_sequence_from_ids(
            &head,
            &relation,
            prediction.as_deref(),
            self.mode,
            self.max_len,
        )?)
    }

    pub fn entity_sequence(&self, id: EntityId) -> Result<TokenSequence, FeatureError> {
        let text = self.vocab.tokenize(&self.graph.entity(id).text());
        Ok(entity_sequence_from_ids(&text, self.max_len)?)
    }

    pub fn entity_sequences(&self) -> Result<Vec<TokenSequence>, FeatureError> {
        self.graph
            .entities()
            .iter()
            .map(|e| self.entity_sequence(e.id))
            .collect()
    }
}
