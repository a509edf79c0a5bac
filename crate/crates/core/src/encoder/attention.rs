//! Single-head self-attention block with a residual connection:
//! `Y = X + softmax(Q Kᵀ / √d) V W_o` where `Q = X W_q`, `K = X W_k`,
//! `V = X W_v`. Only the unpadded prefix of a sequence is fed in, so padding
//! never takes part in attention.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    input: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Matrix,
    mixed: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrad {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

impl AttentionGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            wq: Matrix::zeros(dim, dim),
            wk: Matrix::zeros(dim, dim),
            wv: Matrix::zeros(dim, dim),
            wo: Matrix::zeros(dim, dim),
        }
    }

    pub fn add_assign(&mut self, other: &AttentionGrad) {
        self.wq.add_assign(&other.wq);
        self.wk.add_assign(&other.wk);
        self.wv.add_assign(&other.wv);
        self.wo.add_assign(&other.wo);
    }
}

fn softmax_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

impl AttentionLayer {
    /// Projections ~ N(0, 1/d); the output projection is ten times smaller so
    /// a fresh layer stays close to the identity.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        let mut draw = |scale: f64| {
            let normal = Normal::new(0.0, std * scale).expect("valid std");
            Matrix::from_vec(dim, dim, (0..dim * dim).map(|_| normal.sample(rng)).collect())
        };
        Self {
            wq: draw(1.0),
            wk: draw(1.0),
            wv: draw(1.0),
            wo: draw(0.1),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, AttentionTrace) {
        let scale = 1.0 / (self.dim() as f64).sqrt();
        let q = x.matmul(&self.wq);
        let k = x.matmul(&self.wk);
        let v = x.matmul(&self.wv);
        let mut probs = q.matmul_t(&k);
        for s in probs.as_mut_slice() {
            *s *= scale;
        }
        softmax_rows(&mut probs);
        let mixed = probs.matmul(&v);
        let mut y = mixed.matmul(&self.wo);
        y.add_assign(x);
        let trace = AttentionTrace {
            input: x.clone(),
            q,
            k,
            v,
            probs,
            mixed,
        };
        (y, trace)
    }

    /// Returns `dL/dX` and accumulates weight gradients into `grad`.
    pub fn backward(&self, trace: &AttentionTrace, dy: &Matrix, grad: &mut AttentionGrad) -> Matrix {
        let scale = 1.0 / (self.dim() as f64).sqrt();
        let x = &trace.input;
        grad.wo.add_assign(&trace.mixed.t_matmul(dy));
        let d_mixed = dy.matmul_t(&self.wo);
        let d_probs = d_mixed.matmul_t(&trace.v);
        let dv = trace.probs.t_matmul(&d_mixed);

        let n = trace.probs.rows();
        let mut d_scores = Matrix::zeros(n, n);
        for i in 0..n {
            let p = trace.probs.row(i);
            let dp = d_probs.row(i);
            let inner = crate::linalg::dot(p, dp);
            for (j, out) in d_scores.row_mut(i).iter_mut().enumerate() {
                *out = p[j] * (dp[j] - inner) * scale;
            }
        }
        let dq = d_scores.matmul(&trace.k);
        let dk = d_scores.t_matmul(&trace.q);

        grad.wq.add_assign(&x.t_matmul(&dq));
        grad.wk.add_assign(&x.t_matmul(&dk));
        grad.wv.add_assign(&x.t_matmul(&dv));

        let mut dx = dy.clone();
        dx.add_assign(&dq.matmul_t(&self.wq));
        dx.add_assign(&dk.matmul_t(&self.wk));
        dx.add_assign(&dv.matmul_t(&self.wv));
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn attention_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = AttentionLayer::random(4, &mut rng);
        let x = Matrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.1).collect());
        let (_, trace) = layer.forward(&x);
        for i in 0..3 {
            let s: f64 = trace.probs.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
