use rayon::prelude::*;

use super::loss::{info_nce_loss, info_nce_loss_and_grad, LossConfig};
use super::TrainError;
use crate::encoder::{cosine_similarity, EncoderGrads, EncoderModel, TokenSequence};
use crate::linalg::{axpy, dot, norm, Matrix};

/// `B` query sequences and their `B` answer sequences; row `i` of the score
/// matrix has its positive at column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub queries: Vec<TokenSequence>,
    pub answers: Vec<TokenSequence>,
}

impl TrainBatch {
    pub fn new(queries: Vec<TokenSequence>, answers: Vec<TokenSequence>) -> Result<Self, TrainError> {
        if queries.len() != answers.len() {
            return Err(TrainError::Batch(format!(
                "{} queries but {} answers",
                queries.len(),
                answers.len()
            )));
        }
        if queries.len() < 2 {
            return Err(TrainError::Batch(format!(
                "a batch needs at least 2 pairs, got {}",
                queries.len()
            )));
        }
        Ok(Self { queries, answers })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Gradients for both towers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub query: EncoderGrads,
    pub entity: EncoderGrads,
}

/// Cosine matrix between two lists of pooled vectors.
pub fn score_pooled(queries: &[Vec<f64>], entities: &[Vec<f64>]) -> Result<Matrix, TrainError> {
    let mut s = Matrix::zeros(queries.len(), entities.len());
    for (i, q) in queries.iter().enumerate() {
        for (j, e) in entities.iter().enumerate() {
            s.set(i, j, cosine_similarity(q, e)?);
        }
    }
    Ok(s)
}

fn pooled_all(model: &EncoderModel, seqs: &[TokenSequence]) -> Result<Vec<Vec<f64>>, TrainError> {
    seqs.par_iter()
        .map(|s| model.encode(s).map(|e| e.pooled))
        .collect::<Result<_, _>>()
        .map_err(TrainError::from)
}

pub fn score_batch(
    q_model: &EncoderModel,
    e_model: &EncoderModel,
    batch: &TrainBatch,
) -> Result<Matrix, TrainError> {
    if batch.len() < 2 {
        return Err(TrainError::Batch("a batch needs at least 2 pairs".into()));
    }
    score_pooled(
        &pooled_all(q_model, &batch.queries)?,
        &pooled_all(e_model, &batch.answers)?,
    )
}

pub fn batch_loss(
    q_model: &EncoderModel,
    e_model: &EncoderModel,
    batch: &TrainBatch,
    cfg: &LossConfig,
) -> Result<f64, TrainError> {
    info_nce_loss(&score_batch(q_model, e_model, batch)?, cfg)
}

/// Adds `g · ∂cos(u, v)/∂u` to `out`.
fn cosine_grad_into(g: f64, u: &[f64], nu: f64, v: &[f64], nv: f64, c: f64, out: &mut [f64]) {
    axpy(g / (nu * nv), v, out);
    axpy(-g * c / (nu * nu), u, out);
}

/// Loss and exact gradients of the whole batch pipeline. Per-sequence work
/// runs in parallel; the reduction into the dense gradients follows batch
/// order, so the result does not depend on the thread count.
#[allow(clippy::needless_range_loop)]
pub fn compute_gradients(
    q_model: &EncoderModel,
    e_model: &EncoderModel,
    batch: &TrainBatch,
    cfg: &LossConfig,
) -> Result<(f64, Gradients), TrainError> {
    let b = batch.len();
    if b < 2 {
        return Err(TrainError::Batch("a batch needs at least 2 pairs".into()));
    }
    let q_fwd = batch
        .queries
        .par_iter()
        .map(|s| q_model.forward(s))
        .collect::<Result<Vec<_>, _>>()?;
    let e_fwd = batch
        .answers
        .par_iter()
        .map(|s| e_model.forward(s))
        .collect::<Result<Vec<_>, _>>()?;
    let qs: Vec<&[f64]> = q_fwd.iter().map(|(enc, _)| enc.pooled.as_slice()).collect();
    let es: Vec<&[f64]> = e_fwd.iter().map(|(enc, _)| enc.pooled.as_slice()).collect();
    let q_norms: Vec<f64> = qs.iter().map(|u| norm(u)).collect();
    let e_norms: Vec<f64> = es.iter().map(|v| norm(v)).collect();

    let mut scores = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            scores.set(i, j, cosine_similarity(qs[i], es[j])?);
        }
    }
    let (loss, d_scores) = info_nce_loss_and_grad(&scores, cfg)?;

    let d = q_model.dim();
    let mut d_q = vec![vec![0.0; d]; b];
    let mut d_e = vec![vec![0.0; d]; b];
    for i in 0..b {
        for j in 0..b {
            let g = d_scores.get(i, j);
            // unclamped cosine, so the derivative matches the smooth function
            let c = dot(qs[i], es[j]) / (q_norms[i] * e_norms[j]);
            cosine_grad_into(g, qs[i], q_norms[i], es[j], e_norms[j], c, &mut d_q[i]);
            cosine_grad_into(g, es[j], e_norms[j], qs[i], q_norms[i], c, &mut d_e[j]);
        }
    }

    let q_seq_grads: Vec<_> = (0..b)
        .into_par_iter()
        .map(|i| q_model.backward(&batch.queries[i], &q_fwd[i].1, &d_q[i]))
        .collect();
    let e_seq_grads: Vec<_> = (0..b)
        .into_par_iter()
        .map(|j| e_model.backward(&batch.answers[j], &e_fwd[j].1, &d_e[j]))
        .collect();
    let mut grads = Gradients {
        query: EncoderGrads::zeros(q_model.config()),
        entity: EncoderGrads::zeros(e_model.config()),
    };
    for g in &q_seq_grads {
        grads.query.add_sequence(g);
    }
    for g in &e_seq_grads {
        grads.entity.add_sequence(g);
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_pooled_vectors_score_as_identity() {
        let q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = score_pooled(&q, &q).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn small_batches_are_rejected() {
        assert!(TrainBatch::new(vec![], vec![]).is_err());
    }
}
