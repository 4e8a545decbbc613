//! Dense linear algebra, seeded randomness and the scalar/vector formulas
//! shared by the rest of the crate: cosine similarity, the temperature-scaled
//! contrastive loss, the logistic sigmoid and binary cross-entropy.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::RngStream;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Temperature used by the original contrastive image-text pre-training.
pub const DEFAULT_TEMPERATURE: f64 = 0.07;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `v·w / (‖v‖ ‖w‖)`, clipped into `[-1, 1]`.
pub fn cosine_sim(v: &[f64], w: &[f64]) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::Shape(format!(
            "cosine similarity of vectors with lengths {} and {}",
            v.len(),
            w.len()
        )));
    }
    let (nv, nw) = (norm(v), norm(w));
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero-norm vector".into()));
    }
    Ok((dot(v, w) / (nv * nw)).clamp(-1.0, 1.0))
}

/// `ln Σ exp(xᵢ)` without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// InfoNCE-style loss of `anchor` against `candidates`, where
/// `candidates[positive]` is the matching pair:
///
/// `-ln( exp(sim(a, c₊)/τ) / Σⱼ exp(sim(a, cⱼ)/τ) )`
///
/// Only the supplied candidates enter the denominator.
pub fn contrastive_loss<C: AsRef<[f64]>>(
    anchor: &[f64],
    candidates: &[C],
    positive: usize,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    if candidates.is_empty() {
        return Err(Error::Validation("contrastive loss needs at least one candidate".into()));
    }
    if positive >= candidates.len() {
        return Err(Error::Validation(format!(
            "positive index {positive} out of range for {} candidates",
            candidates.len()
        )));
    }
    let logits = candidates
        .iter()
        .map(|c| cosine_sim(anchor, c.as_ref()).map(|s| s / tau))
        .collect::<Result<Vec<_>>>()?;
    // (m - l₊) + ln(1 + Σ_{j≠argmax} e^{lⱼ - m}); ln_1p keeps the tiny losses
    // of a dominant positive accurate.
    let (top, &m) = logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, l)| (l - m).exp())
        .sum();
    Ok(((m - logits[positive]) + rest.ln_1p()).max(0.0))
}

/// Largest `f64` below 1.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic sigmoid, evaluated on the branch that cannot overflow. Positive
/// inputs past ~37 would round to exactly 1, so the result is capped just
/// below it.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (1.0 / (1.0 + (-x).exp())).min(ONE_BELOW)
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy `-(1/n) Σ (yᵢ ln pᵢ + (1-yᵢ) ln(1-pᵢ))`.
pub fn bce_loss(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "bce over {} targets and {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Shape("bce over empty vectors".into()));
    }
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / actual.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 4.0];
        assert_abs_diff_eq!(cosine_sim(&v, &v).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cosine_sim(&[1.0, 0.0], &[1.0, 1.0]).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cosine_zero_norm_is_domain_error() {
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(cosine_sim(&[1.0], &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn contrastive_examples() {
        let a = [1.0, 0.0];
        assert_eq!(contrastive_loss(&a, &[[2.0, 0.0]], 0, 0.07).unwrap(), 0.0);

        let equal = [[1.0, 1.0], [1.0, -1.0]];
        assert_abs_diff_eq!(
            contrastive_loss(&a, &equal, 1, 0.07).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );

        // sims 1 (positive) and 0 (negative) at tau = 0.07:
        // ln(1 + e^{-1/0.07}), computed with mpmath at 30 digits.
        let loss = contrastive_loss(&a, &[[1.0, 0.0], [0.0, 1.0]], 0, DEFAULT_TEMPERATURE).unwrap();
        assert_abs_diff_eq!(loss, 6.248_747_557_120_382e-7, epsilon = 1e-18);
    }

    #[test]
    fn contrastive_large_logits_do_not_overflow() {
        let a = [1.0, 0.0];
        let loss = contrastive_loss(&a, &[[0.0, 1.0], [1.0, 0.0]], 0, 1e-4).unwrap();
        assert!(loss.is_finite());
        assert_abs_diff_eq!(loss, 1e4, epsilon = 1e-9);
    }

    #[test]
    fn contrastive_rejects_bad_input() {
        let a = [1.0, 0.0];
        assert!(contrastive_loss(&a, &[[1.0, 0.0]], 0, 0.0).is_err());
        assert!(contrastive_loss(&a, &[[1.0, 0.0]], 1, 0.07).is_err());
        assert!(contrastive_loss::<[f64; 2]>(&a, &[], 0, 0.07).is_err());
        assert!(matches!(
            contrastive_loss(&a, &[[0.0, 0.0]], 0, 0.07),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        // 1/(1+e^-2) from mpmath.
        assert_abs_diff_eq!(sigmoid(2.0), 0.880_797_077_977_882_4, epsilon = 1e-15);
        for x in [-500.0, -30.0, -1.0, 3.0, 500.0] {
            assert_abs_diff_eq!(sigmoid(x) + sigmoid(-x), 1.0, epsilon = 1e-15);
        }
        assert!(sigmoid(-500.0) > 0.0 && sigmoid(-500.0).is_finite());
        assert!(sigmoid(500.0) < 1.0 && !sigmoid(500.0).is_nan());
    }

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(bce_loss(&[1.0], &[1.0]).unwrap(), 0.0, epsilon = 2e-7);
        assert_abs_diff_eq!(
            bce_loss(&[1.0], &[0.5]).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        let oracle = -(0.9f64.ln() + 0.8f64.ln() + 0.8f64.ln()) / 3.0;
        assert_abs_diff_eq!(
            bce_loss(&[1.0, 0.0, 1.0], &[0.9, 0.2, 0.8]).unwrap(),
            oracle,
            epsilon = 1e-15
        );
        assert!(matches!(bce_loss(&[1.0], &[0.5, 0.5]), Err(Error::Shape(_))));
    }

    #[test]
    fn bce_clamps_extreme_predictions() {
        let l = bce_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(l.is_finite());
        assert_abs_diff_eq!(l, -(BCE_EPS.ln()), epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            v in prop::collection::vec(-10.0f64..10.0, 8),
            w in prop::collection::vec(-10.0f64..10.0, 8),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&v) > 1e-3 && norm(&w) > 1e-3);
            let base = cosine_sim(&v, &w).unwrap();
            let sv: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            let sw: Vec<f64> = w.iter().map(|x| x * beta).collect();
            prop_assert!((cosine_sim(&sv, &sw).unwrap() - base).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&base));
        }

        #[test]
        fn contrastive_is_nonnegative(
            anchor in prop::collection::vec(-1.0f64..1.0, 4),
            cands in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..6),
            pos in 0usize..6,
            tau in 0.01f64..2.0,
        ) {
            prop_assume!(norm(&anchor) > 1e-3 && cands.iter().all(|c| norm(c) > 1e-3));
            let pos = pos % cands.len();
            prop_assert!(contrastive_loss(&anchor, &cands, pos, tau).unwrap() >= 0.0);
        }

        #[test]
        fn perfect_prediction_minimises_bce(
            y in prop::collection::vec(prop::bool::ANY, 1..20),
            p in prop::collection::vec(0.0f64..=1.0, 20),
        ) {
            let y: Vec<f64> = y.into_iter().map(|b| b as u8 as f64).collect();
            let p = &p[..y.len()];
            let best = bce_loss(&y, &y).unwrap();
            prop_assert!(best <= bce_loss(&y, p).unwrap() + 1e-15);
        }

        #[test]
        fn sigmoid_is_monotone(mut xs in prop::collection::vec(-50.0f64..50.0, 2..50)) {
            xs.sort_by(f64::total_cmp);
            for w in xs.windows(2) {
                prop_assert!(sigmoid(w[0]) <= sigmoid(w[1]));
            }
        }
    }
}
