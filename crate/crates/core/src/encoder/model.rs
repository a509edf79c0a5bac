use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::attention::{AttentionGrad, AttentionLayer, AttentionTrace};
use super::sequence::TokenSequence;
use super::EncoderError;
use crate::linalg::{axpy, Matrix};

/// Standard deviation of the initial embedding tables.
pub const INIT_STD: f64 = 0.1;
pub const SEGMENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Cls,
}

impl Pooling {
    pub(crate) fn code(self) -> u8 {
        match self {
            Pooling::Mean => 0,
            Pooling::Cls => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Pooling::Mean),
            1 => Some(Pooling::Cls),
            _ => None,
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Cls => "cls",
        })
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "cls" => Ok(Pooling::Cls),
            other => Err(format!("unknown pooling {other:?} (expected mean or cls)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionKind {
    Learned,
    /// Fixed sinusoids, scaled to the embedding init scale and never trained.
    Sinusoidal,
}

impl PositionKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            PositionKind::Learned => 0,
            PositionKind::Sinusoidal => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PositionKind::Learned),
            1 => Some(PositionKind::Sinusoidal),
            _ => None,
        }
    }
}

impl fmt::Display for PositionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PositionKind::Learned => "learned",
            PositionKind::Sinusoidal => "sinusoidal",
        })
    }
}

impl FromStr for PositionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learned" => Ok(PositionKind::Learned),
            "sinusoidal" => Ok(PositionKind::Sinusoidal),
            other => Err(format!(
                "unknown position kind {other:?} (expected learned or sinusoidal)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub max_len: usize,
    pub pooling: Pooling,
    pub positions: PositionKind,
    /// Number of self-attention blocks on top of the embedding sum.
    pub layers: usize,
}

impl EncoderConfig {
    pub fn shallow(vocab_size: usize, dim: usize, max_len: usize) -> Self {
        Self {
            vocab_size,
            dim,
            max_len,
            pooling: Pooling::Mean,
            positions: PositionKind::Learned,
            layers: 0,
        }
    }
}

/// Per-position representations and their pooled summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    /// `seq_len × d`; padded rows are zero.
    pub per_token: Matrix,
    pub pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    pub token: Matrix,
    pub position: Matrix,
    pub segment: Matrix,
    pub layers: Vec<AttentionLayer>,
}

/// Forward-pass intermediates needed by [`EncoderModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    valid: usize,
    traces: Vec<AttentionTrace>,
}

/// Gradient of one sequence. Token rows are listed per position and may
/// repeat an id.
#[derive(Debug, Clone)]
pub struct SequenceGrad {
    pub token_rows: Vec<(u32, Vec<f64>)>,
    /// Rows `0..valid` of the position table.
    pub position: Matrix,
    pub segment: Matrix,
    pub layers: Vec<AttentionGrad>,
}

/// Dense gradient with the shape of every table in an [`EncoderModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub token: Matrix,
    pub position: Matrix,
    pub segment: Matrix,
    pub layers: Vec<AttentionGrad>,
}

impl EncoderGrads {
    pub fn zeros(config: &EncoderConfig) -> Self {
        Self {
            token: Matrix::zeros(config.vocab_size, config.dim),
            position: Matrix::zeros(config.max_len, config.dim),
            segment: Matrix::zeros(SEGMENTS, config.dim),
            layers: (0..config.layers)
                .map(|_| AttentionGrad::zeros(config.dim))
                .collect(),
        }
    }

    pub fn add_sequence(&mut self, g: &SequenceGrad) {
        for (id, row) in &g.token_rows {
            axpy(1.0, row, self.token.row_mut(*id as usize));
        }
        for i in 0..g.position.rows() {
            axpy(1.0, g.position.row(i), self.position.row_mut(i));
        }
        self.segment.add_assign(&g.segment);
        for (acc, l) in self.layers.iter_mut().zip(&g.layers) {
            acc.add_assign(l);
        }
    }

    /// Tensors in the same order as [`EncoderModel::tensors_mut`].
    pub fn tensors(&self, positions: PositionKind) -> Vec<&[f64]> {
        let mut out = vec![self.token.as_slice()];
        if positions == PositionKind::Learned {
            out.push(self.position.as_slice());
        }
        out.push(self.segment.as_slice());
        for l in &self.layers {
            out.extend([l.wq.as_slice(), l.wk.as_slice(), l.wv.as_slice(), l.wo.as_slice()]);
        }
        out
    }
}

fn sinusoidal(max_len: usize, dim: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(max_len, dim);
    for pos in 0..max_len {
        for i in 0..dim {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 * freq;
            m.set(pos, i, scale * if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

/// Pools the first `valid` rows of `per_token`.
pub fn pool(per_token: &Matrix, valid: usize, pooling: Pooling) -> Vec<f64> {
    match pooling {
        Pooling::Cls => per_token.row(0).to_vec(),
        Pooling::Mean => {
            let mut out = vec![0.0; per_token.cols()];
            for i in 0..valid {
                axpy(1.0, per_token.row(i), &mut out);
            }
            let n = valid as f64;
            out.iter_mut().for_each(|x| *x /= n);
            out
        }
    }
}

impl EncoderModel {
    /// Gaussian tables drawn from a generator seeded with `seed`.
    pub fn new(config: EncoderConfig, seed: u64) -> Self {
        assert!(config.dim > 0 && config.vocab_size > 0 && config.max_len > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut table = |rows: usize| {
            let data = (0..rows * config.dim).map(|_| normal.sample(&mut rng)).collect();
            Matrix::from_vec(rows, config.dim, data)
        };
        let token = table(config.vocab_size);
        let learned_positions = table(config.max_len);
        let segment = table(SEGMENTS);
        let position = match config.positions {
            PositionKind::Learned => learned_positions,
            PositionKind::Sinusoidal => sinusoidal(config.max_len, config.dim, INIT_STD),
        };
        let layers = (0..config.layers)
            .map(|_| AttentionLayer::random(config.dim, &mut rng))
            .collect();
        Self {
            config,
            token,
            position,
            segment,
            layers,
        }
    }

    /// Assembles a model from explicit tables (shapes are checked).
    pub fn from_parts(
        config: EncoderConfig,
        token: Matrix,
        position: Matrix,
        segment: Matrix,
        layers: Vec<AttentionLayer>,
    ) -> Result<Self, EncoderError> {
        let d = config.dim;
        let shape_ok = (token.rows(), token.cols()) == (config.vocab_size, d)
            && (position.rows(), position.cols()) == (config.max_len, d)
            && (segment.rows(), segment.cols()) == (SEGMENTS, d)
            && layers.len() == config.layers
            && layers.iter().all(|l| l.dim() == d);
        if !shape_ok {
            return Err(EncoderError::Shape(
                "tables do not match the encoder config".into(),
            ));
        }
        Ok(Self {
            config,
            token,
            position,
            segment,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn is_finite(&self) -> bool {
        self.token.is_finite()
            && self.position.is_finite()
            && self.segment.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.wq.is_finite() && l.wk.is_finite() && l.wv.is_finite() && l.wo.is_finite())
    }

    /// Trainable tensors in a fixed order; fixed sinusoidal positions are
    /// left out.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.token.as_mut_slice()];
        if self.config.positions == PositionKind::Learned {
            out.push(self.position.as_mut_slice());
        }
        out.push(self.segment.as_mut_slice());
        for l in &mut self.layers {
            out.extend([
                l.wq.as_mut_slice(),
                l.wk.as_mut_slice(),
                l.wv.as_mut_slice(),
                l.wo.as_mut_slice(),
            ]);
        }
        out
    }

    fn validate(&self, seq: &TokenSequence) -> Result<usize, EncoderError> {
        if seq.len() > self.config.max_len && seq.mask[self.config.max_len..].contains(&1) {
            return Err(EncoderError::Shape(format!(
                "sequence of {} valid tokens exceeds max_len {}",
                seq.valid_len(),
                self.config.max_len
            )));
        }
        let valid = seq.valid_len();
        if valid == 0 {
            return Err(EncoderError::Shape("sequence has no valid positions".into()));
        }
        for &id in &seq.token_ids[..valid] {
            if id as usize >= self.config.vocab_size {
                return Err(EncoderError::TokenOutOfRange {
                    id,
                    vocab_size: self.config.vocab_size,
                });
            }
        }
        if let Some(&s) = seq.segment_ids[..valid].iter().find(|&&s| s as usize >= SEGMENTS) {
            return Err(EncoderError::Shape(format!("segment id {s} out of range")));
        }
        Ok(valid)
    }

    fn embed(&self, seq: &TokenSequence, valid: usize) -> Matrix {
        let mut x = Matrix::zeros(valid, self.dim());
        for i in 0..valid {
            let row = x.row_mut(i);
            row.copy_from_slice(self.token.row(seq.token_ids[i] as usize));
            axpy(1.0, self.position.row(i), row);
            axpy(1.0, self.segment.row(seq.segment_ids[i] as usize), row);
        }
        x
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<EncodedSequence, EncoderError> {
        self.forward(seq).map(|(enc, _)| enc)
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<(EncodedSequence, ForwardTrace), EncoderError> {
        let valid = self.validate(seq)?;
        let mut x = self.embed(seq, valid);
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, trace) = layer.forward(&x);
            traces.push(trace);
            x = y;
        }
        let pooled = pool(&x, valid, self.config.pooling);
        let mut per_token = Matrix::zeros(seq.len(), self.dim());
        per_token.as_mut_slice()[..valid * self.dim()].copy_from_slice(x.as_slice());
        Ok((
            EncodedSequence { per_token, pooled },
            ForwardTrace { valid, traces },
        ))
    }

    /// Back-propagates `d_pooled` through pooling, the attention stack and
    /// the embedding sum.
    pub fn backward(&self, seq: &TokenSequence, trace: &ForwardTrace, d_pooled: &[f64]) -> SequenceGrad {
        let d = self.dim();
        let valid = trace.valid;
        let mut dx = Matrix::zeros(valid, d);
        match self.config.pooling {
            Pooling::Cls => dx.row_mut(0).copy_from_slice(d_pooled),
            Pooling::Mean => {
                let w = 1.0 / valid as f64;
                for i in 0..valid {
                    axpy(w, d_pooled, dx.row_mut(i));
                }
            }
        }
        let mut layers: Vec<AttentionGrad> =
            (0..self.layers.len()).map(|_| AttentionGrad::zeros(d)).collect();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            dx = layer.backward(&trace.traces[l], &dx, &mut layers[l]);
        }
        let mut segment = Matrix::zeros(SEGMENTS, d);
        let mut token_rows = Vec::with_capacity(valid);
        for i in 0..valid {
            token_rows.push((seq.token_ids[i], dx.row(i).to_vec()));
            axpy(1.0, dx.row(i), segment.row_mut(seq.segment_ids[i] as usize));
        }
        SequenceGrad {
            token_rows,
            position: dx,
            segment,
            layers,
        }
    }
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, EncoderError> {
    let nu = crate::linalg::norm(u);
    let nv = crate::linalg::norm(v);
    cosine_with_norms(u, nu, v, nv)
}

/// Cosine with precomputed norms; same arithmetic as [`cosine_similarity`].
pub fn cosine_with_norms(u: &[f64], nu: f64, v: &[f64], nv: f64) -> Result<f64, EncoderError> {
    if u.len() != v.len() {
        return Err(EncoderError::Shape(format!(
            "vector lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(EncoderError::ZeroNorm);
    }
    Ok((crate::linalg::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::sequence::{entity_sequence_from_ids, query_sequence_from_ids, SequenceMode};

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EncoderError::ZeroNorm)
        ));
    }

    #[test]
    fn per_token_is_the_embedding_sum() {
        let m = EncoderModel::new(EncoderConfig::shallow(12, 4, 8), 1);
        let seq = query_sequence_from_ids(&[5], &[7], Some(&[9]), SequenceMode::Full, 8).unwrap();
        let enc = m.encode(&seq).unwrap();
        for i in 0..7 {
            for j in 0..4 {
                let expected = m.token.get(seq.token_ids[i] as usize, j)
                    + m.position.get(i, j)
                    + m.segment.get(seq.segment_ids[i] as usize, j);
                assert_eq!(enc.per_token.get(i, j), expected);
            }
        }
        assert!(enc.per_token.row(7).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pooling_modes() {
        let rows = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![100.0, 100.0]]);
        assert_eq!(pool(&rows, 2, Pooling::Mean), vec![2.0, 3.0]);
        assert_eq!(pool(&rows, 2, Pooling::Cls), vec![1.0, 2.0]);
        let same = Matrix::from_rows(&vec![vec![0.5, -1.0]; 4]);
        assert_eq!(pool(&same, 4, Pooling::Mean), vec![0.5, -1.0]);
    }

    #[test]
    fn out_of_range_token_is_rejected() {
        let m = EncoderModel::new(EncoderConfig::shallow(6, 4, 8), 1);
        let seq = entity_sequence_from_ids(&[6], 8).unwrap();
        assert!(matches!(
            m.encode(&seq),
            Err(EncoderError::TokenOutOfRange { id: 6, .. })
        ));
    }

    #[test]
    fn identical_seeds_give_identical_towers() {
        let cfg = EncoderConfig {
            layers: 1,
            ..EncoderConfig::shallow(10, 4, 6)
        };
        assert_eq!(EncoderModel::new(cfg, 9), EncoderModel::new(cfg, 9));
        assert_ne!(EncoderModel::new(cfg, 9), EncoderModel::new(cfg, 10));
    }
}
