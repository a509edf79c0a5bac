//! Filtered link-prediction ranking and MRR / Hit@k aggregation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{symmetrize, InverseRegistry, Query, RegistryError};
use crate::describe::QueryKey;
use crate::encoder::{cosine_with_norms, EncoderError, EncoderModel, SequenceMode, TokenSequence};
use crate::features::{FeatureError, Featurizer};
use crate::kg::{EntityId, FilterIndex, KnowledgeGraph, Split};
use crate::linalg::{norm, Matrix};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("answer {0} is in its own filter set")]
    AnswerFiltered(EntityId),
    #[error("answer {answer} is outside the {n} scored candidates")]
    AnswerOutOfRange { answer: EntityId, n: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Pooled entity-tower embedding of every entity, row `i` for entity `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMatrix {
    embeddings: Matrix,
    norms: Vec<f64>,
}

impl CandidateMatrix {
    pub fn from_embeddings(embeddings: Matrix) -> Self {
        let norms = (0..embeddings.rows()).map(|i| norm(embeddings.row(i))).collect();
        Self { embeddings, norms }
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cosine of `query` against every candidate.
    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>, EncoderError> {
        let nq = norm(query);
        (0..self.len())
            .map(|i| cosine_with_norms(query, nq, self.embeddings.row(i), self.norms[i]))
            .collect()
    }
}

pub fn embed_all_entities(
    e_model: &EncoderModel,
    features: &Featurizer<'_>,
) -> Result<CandidateMatrix, EvalError> {
    let seqs = features.entity_sequences()?;
    embed_sequences(e_model, &seqs)
}

pub fn embed_sequences(model: &EncoderModel, seqs: &[TokenSequence]) -> Result<CandidateMatrix, EvalError> {
    let pooled: Vec<Vec<f64>> = seqs
        .par_iter()
        .map(|s| model.encode(s).map(|e| e.pooled))
        .collect::<Result<_, _>>()?;
    let mut m = Matrix::zeros(pooled.len(), model.dim());
    for (i, p) in pooled.iter().enumerate() {
        m.row_mut(i).copy_from_slice(p);
    }
    Ok(CandidateMatrix::from_embeddings(m))
}

/// `1 + #{better} + #{tied}` over candidates outside `filter ∪ {answer}`.
pub fn rank_answer(scores: &[f64], answer: EntityId, filter: &[EntityId]) -> Result<usize, EvalError> {
    if filter.contains(&answer) {
        return Err(EvalError::AnswerFiltered(answer));
    }
    let target = *scores.get(answer.index()).ok_or(EvalError::AnswerOutOfRange {
        answer,
        n: scores.len(),
    })?;
    let mut excluded = vec![false; scores.len()];
    for e in filter {
        if let Some(x) = excluded.get_mut(e.index()) {
            *x = true;
        }
    }
    excluded[answer.index()] = true;
    let ahead = scores
        .iter()
        .zip(&excluded)
        .filter(|(&s, &skip)| !skip && s >= target)
        .count();
    Ok(1 + ahead)
}

/// Top `k` candidates outside `filter`, by descending score then ascending id.
pub fn predict_topk(
    q_model: &EncoderModel,
    candidates: &CandidateMatrix,
    query: &TokenSequence,
    k: usize,
    filter: &[EntityId],
) -> Result<Vec<(EntityId, f64)>, EvalError> {
    let pooled = q_model.encode(query)?.pooled;
    Ok(top_k(&candidates.scores(&pooled)?, k, filter))
}

pub fn top_k(scores: &[f64], k: usize, filter: &[EntityId]) -> Vec<(EntityId, f64)> {
    let mut excluded = vec![false; scores.len()];
    for e in filter {
        if let Some(x) = excluded.get_mut(e.index()) {
            *x = true;
        }
    }
    let mut ranked: Vec<(EntityId, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded[*i])
        .map(|(i, &s)| (EntityId(i as u32), s))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k.max(1));
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hit1: f64,
    pub hit3: f64,
    pub hit10: f64,
    pub n_queries: usize,
}

impl Metrics {
    /// Sums run in slice order.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self, EvalError> {
        if ranks.is_empty() {
            return Err(EvalError::Empty);
        }
        let n = ranks.len() as f64;
        let mut rr = 0.0;
        let mut hits = [0usize; 3];
        for &r in ranks {
            rr += 1.0 / r as f64;
            for (h, k) in hits.iter_mut().zip([1, 3, 10]) {
                if r <= k {
                    *h += 1;
                }
            }
        }
        Ok(Self {
            mrr: rr / n,
            hit1: hits[0] as f64 / n,
            hit3: hits[1] as f64 / n,
            hit10: hits[2] as f64 / n,
            n_queries: ranks.len(),
        })
    }
}

/// Known answers for `query` other than its own answer.
pub fn query_filter(index: &FilterIndex, graph: &KnowledgeGraph, query: &Query) -> Vec<EntityId> {
    let mut f = index.known_answers(query.source, query.relation, graph.inverse_of(query.relation));
    f.retain(|&e| e != query.answer);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedQuery {
    pub query: Query,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub ranks: Vec<RankedQuery>,
}

impl Evaluation {
    /// `query<TAB>rank` lines; the query is `source relation direction answer`
    /// in raw keys.
    pub fn ranks_tsv(&self, graph: &KnowledgeGraph) -> String {
        let mut out = String::new();
        for r in &self.ranks {
            let key = QueryKey::of(graph, &r.query);
            let answer = &graph.entity(r.query.answer).raw_key;
            let _ = writeln!(
                out,
                "{} {} {} {answer}\t{}",
                key.source, key.relation, key.direction, r.rank
            );
        }
        out
    }
}

/// Ranks `queries` against precomputed candidates with filtering.
pub fn evaluate_queries(
    q_model: &EncoderModel,
    candidates: &CandidateMatrix,
    features: &Featurizer<'_>,
    index: &FilterIndex,
    queries: &[Query],
) -> Result<Evaluation, EvalError> {
    let ranks: Vec<RankedQuery> = queries
        .par_iter()
        .map(|q| {
            let seq = features.query_sequence(q)?;
            let pooled = q_model.encode(&seq)?.pooled;
            let scores = candidates.scores(&pooled)?;
            let rank = rank_answer(&scores, q.answer, &query_filter(index, features.graph, q))?;
            Ok(RankedQuery { query: *q, rank })
        })
        .collect::<Result<_, EvalError>>()?;
    let metrics = Metrics::from_ranks(&ranks.iter().map(|r| r.rank).collect::<Vec<_>>())?;
    Ok(Evaluation { metrics, ranks })
}

/// Both directions of every triple in `split`, pooled into one metric set.
pub fn evaluate_split(
    q_model: &EncoderModel,
    e_model: &EncoderModel,
    features: &Featurizer<'_>,
    registry: &InverseRegistry,
    split: Split,
) -> Result<Evaluation, EvalError> {
    let queries = symmetrize(features.graph, registry, split)?;
    let candidates = embed_all_entities(e_model, features)?;
    let index = FilterIndex::build(features.graph);
    evaluate_queries(q_model, &candidates, features, &index, &queries)
}

/// On-disk metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub mode: SequenceMode,
    pub mrr: f64,
    pub hit1: f64,
    pub hit3: f64,
    pub hit10: f64,
    pub n_queries: usize,
    pub checkpoint_id: String,
}

impl MetricsReport {
    pub fn new(split: Split, mode: SequenceMode, metrics: &Metrics, checkpoint_id: String) -> Self {
        Self {
            split,
            mode,
            mrr: metrics.mrr,
            hit1: metrics.hit1,
            hit3: metrics.hit3,
            hit10: metrics.hit10,
            n_queries: metrics.n_queries,
            checkpoint_id,
        }
    }
}
