use kermit_core::linalg::Matrix;
use kermit_core::train::{info_nce_loss, info_nce_loss_and_grad, score_pooled};
use kermit_core::{LossConfig, MarginMode};
use proptest::prelude::*;

fn eye() -> Matrix {
    Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])
}

fn cfg(gamma: f64, tau: f64, margin_mode: MarginMode) -> LossConfig {
    LossConfig {
        gamma,
        tau,
        margin_mode,
    }
}

/// Direct softmax without the max shift, for well-scaled inputs only.
fn naive_loss(s: &Matrix, c: &LossConfig) -> f64 {
    let b = s.rows();
    let mut total = 0.0;
    for i in 0..b {
        let z: Vec<f64> = (0..b)
            .map(|j| {
                let m = match c.margin_mode {
                    MarginMode::PositiveOnly => (i == j) as u8 as f64,
                    MarginMode::Literal => 1.0,
                };
                (s.get(i, j) - c.gamma * m) / c.tau
            })
            .collect();
        let denom: f64 = z.iter().map(|x| x.exp()).sum();
        total -= (z[i].exp() / denom).ln();
    }
    total / b as f64
}

#[test]
fn identity_scores_closed_form() {
    for mode in [MarginMode::PositiveOnly, MarginMode::Literal] {
        let l = info_nce_loss(&eye(), &cfg(0.0, 1.0, mode)).unwrap();
        assert!((l - 0.31326169).abs() < 1e-6, "{mode}: {l}");
        assert!((l - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
    }
    let l = info_nce_loss(&eye(), &cfg(0.5, 1.0, MarginMode::PositiveOnly)).unwrap();
    assert!((l - 0.47407698).abs() < 1e-6, "{l}");
}

#[test]
fn literal_margin_cancels() {
    let s = Matrix::from_rows(&[vec![0.3, -0.2, 0.9], vec![0.1, 0.5, -0.7], vec![-0.4, 0.2, 0.6]]);
    let base = info_nce_loss(&s, &cfg(0.0, 0.05, MarginMode::Literal)).unwrap();
    for gamma in [0.02, 0.5] {
        let l = info_nce_loss(&s, &cfg(gamma, 0.05, MarginMode::Literal)).unwrap();
        assert!((l - base).abs() < 1e-10);
    }
    assert!(info_nce_loss(&eye(), &cfg(0.5, 1.0, MarginMode::Literal)).unwrap() - 0.31326169 < 1e-6);
}

#[test]
fn flat_softmax_at_huge_temperature() {
    let s = Matrix::from_rows(&[vec![0.3, -0.2, 0.9], vec![0.1, 0.5, -0.7], vec![-0.4, 0.2, 0.6]]);
    let l = info_nce_loss(&s, &cfg(0.02, 1e6, MarginMode::PositiveOnly)).unwrap();
    assert!((l - 3f64.ln()).abs() < 1e-3);
}

#[test]
fn perfect_separation_drives_loss_to_zero() {
    let s = Matrix::from_rows(&[
        vec![1.0, -1.0, -1.0],
        vec![-1.0, 1.0, -1.0],
        vec![-1.0, -1.0, 1.0],
    ]);
    assert!(info_nce_loss(&s, &cfg(0.0, 0.01, MarginMode::Literal)).unwrap() < 1e-6);
}

#[test]
fn scores_of_unit_axes() {
    let s = score_pooled(
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
    )
    .unwrap();
    assert_eq!(s, eye());
}

#[test]
fn rejects_bad_inputs() {
    let mut s = eye();
    s.set(0, 1, f64::NAN);
    assert!(info_nce_loss(&s, &LossConfig::default()).is_err());
    assert!(info_nce_loss(&eye(), &cfg(0.0, 0.0, MarginMode::Literal)).is_err());
    assert!(info_nce_loss(&Matrix::zeros(2, 3), &LossConfig::default()).is_err());
}

fn score_matrix() -> impl Strategy<Value = Matrix> {
    (2usize..6).prop_flat_map(|b| {
        prop::collection::vec(-1.0f64..=1.0, b * b).prop_map(move |v| Matrix::from_vec(b, b, v))
    })
}

proptest! {
    #[test]
    fn matches_direct_softmax(s in score_matrix(), gamma in 0.0f64..1.0, tau in 0.2f64..2.0, literal in any::<bool>()) {
        let mode = if literal { MarginMode::Literal } else { MarginMode::PositiveOnly };
        let c = cfg(gamma, tau, mode);
        let l = info_nce_loss(&s, &c).unwrap();
        prop_assert!((l - naive_loss(&s, &c)).abs() < 1e-10);
    }

    #[test]
    fn literal_loss_is_non_negative_and_gamma_free(s in score_matrix(), gamma in 0.0f64..1.0) {
        let zero = info_nce_loss(&s, &cfg(0.0, 0.05, MarginMode::Literal)).unwrap();
        prop_assert!(zero >= 0.0);
        let l = info_nce_loss(&s, &cfg(gamma, 0.05, MarginMode::Literal)).unwrap();
        prop_assert!((l - zero).abs() < 1e-10);
        let (_, g0) = info_nce_loss_and_grad(&s, &cfg(0.0, 0.05, MarginMode::Literal)).unwrap();
        let (_, g1) = info_nce_loss_and_grad(&s, &cfg(gamma, 0.05, MarginMode::Literal)).unwrap();
        for (a, b) in g0.as_slice().iter().zip(g1.as_slice()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn positive_margin_strictly_raises_loss(s in score_matrix(), g in 0.0f64..0.5, dg in 0.01f64..0.5) {
        let lo = info_nce_loss(&s, &cfg(g, 0.5, MarginMode::PositiveOnly)).unwrap();
        let hi = info_nce_loss(&s, &cfg(g + dg, 0.5, MarginMode::PositiveOnly)).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn score_gradient_matches_differences(s in score_matrix(), gamma in 0.0f64..0.5, tau in 0.2f64..1.0) {
        let c = cfg(gamma, tau, MarginMode::PositiveOnly);
        let (_, g) = info_nce_loss_and_grad(&s, &c).unwrap();
        let h = 1e-5;
        for k in 0..s.as_slice().len() {
            let mut plus = s.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = s.clone();
            minus.as_mut_slice()[k] -= h;
            let n = (info_nce_loss(&plus, &c).unwrap() - info_nce_loss(&minus, &c).unwrap()) / (2.0 * h);
            prop_assert!((n - g.as_slice()[k]).abs() < 1e-7);
        }
    }
}
