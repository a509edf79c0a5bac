use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::linalg::Matrix;

/// Which logits the additive margin is subtracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// Only the positive logit; the usual additive-margin formulation.
    PositiveOnly,
    /// Every logit in the row. The shift is uniform, so the margin has no
    /// effect at all.
    Literal,
}

impl fmt::Display for MarginMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarginMode::PositiveOnly => "positive_only",
            MarginMode::Literal => "literal",
        })
    }
}

impl FromStr for MarginMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive_only" => Ok(MarginMode::PositiveOnly),
            "literal" => Ok(MarginMode::Literal),
            other => Err(format!(
                "unknown margin mode {other:?} (expected positive_only or literal)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub tau: f64,
    pub margin_mode: MarginMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 0.02,
            tau: 0.05,
            margin_mode: MarginMode::PositiveOnly,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(TrainError::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(TrainError::Config(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    fn logit(&self, score: f64, positive: bool) -> f64 {
        let shifted = match self.margin_mode {
            MarginMode::PositiveOnly if positive => score - self.gamma,
            MarginMode::PositiveOnly => score,
            MarginMode::Literal => score - self.gamma,
        };
        shifted / self.tau
    }
}

/// Mean over rows of `-log softmax(z_i)_i`.
pub fn info_nce_loss(scores: &Matrix, cfg: &LossConfig) -> Result<f64, TrainError> {
    info_nce_loss_and_grad(scores, cfg).map(|(loss, _)| loss)
}

/// Loss and its gradient with respect to every score.
pub fn info_nce_loss_and_grad(scores: &Matrix, cfg: &LossConfig) -> Result<(f64, Matrix), TrainError> {
    cfg.validate()?;
    let b = scores.rows();
    if b == 0 || scores.cols() != b {
        return Err(TrainError::Batch(format!(
            "score matrix must be square and non-empty, got {}x{}",
            b,
            scores.cols()
        )));
    }
    if !scores.is_finite() {
        return Err(TrainError::NonFinite("score matrix".into()));
    }
    let mut grad = Matrix::zeros(b, b);
    let mut total = 0.0;
    let mut z = vec![0.0; b];
    for i in 0..b {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = cfg.logit(scores.get(i, j), i == j);
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&x| (x - max).exp()).sum();
        let log_norm = max + sum.ln();
        total += log_norm - z[i];
        // dL/dz_j = (p_j - [j == i]) / B, and dz/ds = 1/tau
        let row = grad.row_mut(i);
        for j in 0..b {
            let p = (z[j] - log_norm).exp();
            let target = if i == j { 1.0 } else { 0.0 };
            row[j] = (p - target) / (b as f64 * cfg.tau);
        }
    }
    Ok((total / b as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye() -> Matrix {
        Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])
    }

    #[test]
    fn margin_raises_positive_only_loss() {
        let lo = LossConfig {
            gamma: 0.0,
            tau: 1.0,
            margin_mode: MarginMode::PositiveOnly,
        };
        let hi = LossConfig { gamma: 0.5, ..lo };
        assert!(info_nce_loss(&eye(), &hi).unwrap() > info_nce_loss(&eye(), &lo).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = LossConfig::default();
        let bad = Matrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(info_nce_loss(&bad, &cfg), Err(TrainError::NonFinite(_))));
        let zero_tau = LossConfig { tau: 0.0, ..cfg };
        assert!(matches!(
            info_nce_loss(&eye(), &zero_tau),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let s = Matrix::from_rows(&[vec![0.3, -0.2, 0.1], vec![0.0, 0.9, 0.4], vec![-0.5, 0.2, 0.7]]);
        let (_, g) = info_nce_loss_and_grad(&s, &LossConfig::default()).unwrap();
        for i in 0..3 {
            assert!(g.row(i).iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
