//! Ranked-retrieval and classification metrics. Ties are resolved by the
//! original index so results are deterministic.

use crate::error::{Error, Result};

/// Scores paired with binary relevance for one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub scores: Vec<f64>,
    pub relevance: Vec<u8>,
}

impl RankedResult {
    pub fn new(scores: Vec<f64>, relevance: Vec<u8>) -> Result<Self> {
        if scores.len() != relevance.len() {
            return Err(Error::LengthMismatch(format!(
                "{} scores vs {} relevance flags",
                scores.len(),
                relevance.len()
            )));
        }
        if relevance.iter().any(|&r| r > 1) {
            return Err(Error::InvalidArgument("relevance values must be 0 or 1".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("scores".into()));
        }
        Ok(RankedResult { scores, relevance })
    }
}

/// Average precision: sort by descending score (ties by ascending index),
/// then average precision@k over the ranks of relevant items. Undefined when
/// nothing is relevant.
pub fn average_precision(result: &RankedResult) -> Result<f64> {
    let total_relevant = result.relevance.iter().filter(|&&r| r == 1).count();
    if total_relevant == 0 {
        return Err(Error::UndefinedAveragePrecision);
    }
    let mut order: Vec<usize> = (0..result.scores.len()).collect();
    order.sort_by(|&a, &b| {
        result.scores[b]
            .partial_cmp(&result.scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if result.relevance[idx] == 1 {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / total_relevant as f64)
}

/// Arithmetic mean of per-concept APs.
pub fn mean_ap(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::InvalidArgument("mean_ap over an empty list".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Fraction of rows whose true class is among the k highest scores; score
/// ties resolve toward the lower class index.
pub fn top_k_accuracy(score_matrix: &[Vec<f64>], true_class: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if score_matrix.len() != true_class.len() {
        return Err(Error::LengthMismatch(format!(
            "{} score rows vs {} labels",
            score_matrix.len(),
            true_class.len()
        )));
    }
    if score_matrix.is_empty() {
        return Err(Error::InvalidArgument("empty score matrix".into()));
    }
    let classes = score_matrix[0].len();
    if k > classes {
        return Err(Error::InvalidArgument(format!("k={k} exceeds class count {classes}")));
    }
    let mut correct = 0usize;
    for (row, &truth) in score_matrix.iter().zip(true_class) {
        if row.len() != classes {
            return Err(Error::LengthMismatch("ragged score matrix".into()));
        }
        if truth >= classes {
            return Err(Error::InvalidArgument(format!(
                "true class {truth} out of range for {classes} classes"
            )));
        }
        let mut order: Vec<usize> = (0..classes).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        if order[..k].contains(&truth) {
            correct += 1;
        }
    }
    Ok(correct as f64 / score_matrix.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent O(n^2) AP definition used as an oracle: for each relevant
    /// item, count how many items are ranked at or before it.
    pub fn brute_force_ap(scores: &[f64], relevance: &[u8]) -> Option<f64> {
        let n = scores.len();
        let total: usize = relevance.iter().map(|&r| r as usize).sum();
        if total == 0 {
            return None;
        }
        let ranked_before_or_at = |i: usize| -> usize {
            (0..n)
                .filter(|&j| {
                    scores[j] > scores[i] || (scores[j] == scores[i] && j <= i)
                })
                .count()
        };
        let mut sum = 0.0;
        for i in 0..n {
            if relevance[i] == 1 {
                let rank = ranked_before_or_at(i);
                let rel_at_or_before = (0..n)
                    .filter(|&j| relevance[j] == 1 && ranked_before_or_at(j) <= rank)
                    .count();
                sum += rel_at_or_before as f64 / rank as f64;
            }
        }
        Some(sum / total as f64)
    }

    fn descending_scores(n: usize) -> Vec<f64> {
        (0..n).map(|i| (n - i) as f64).collect()
    }

    #[test]
    fn ap_derived_example() {
        let r = RankedResult::new(descending_scores(3), vec![1, 0, 1]).unwrap();
        assert!((average_precision(&r).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_perfect_ranking() {
        let r = RankedResult::new(descending_scores(5), vec![1, 1, 0, 0, 0]).unwrap();
        assert_eq!(average_precision(&r).unwrap(), 1.0);
    }

    #[test]
    fn ap_undefined_without_positives() {
        let r = RankedResult::new(descending_scores(3), vec![0, 0, 0]).unwrap();
        assert!(matches!(average_precision(&r), Err(Error::UndefinedAveragePrecision)));
    }

    #[test]
    fn ap_matches_brute_force_exhaustively() {
        for n in 1..=8usize {
            let scores = descending_scores(n);
            for pattern in 1u32..(1 << n) {
                let relevance: Vec<u8> = (0..n).map(|i| ((pattern >> i) & 1) as u8).collect();
                let r = RankedResult::new(scores.clone(), relevance.clone()).unwrap();
                let got = average_precision(&r).unwrap();
                let want = brute_force_ap(&scores, &relevance).unwrap();
                assert!((got - want).abs() < 1e-12, "n={n} pattern={pattern:b}");
            }
        }
    }

    #[test]
    fn ap_reverse_ranking_matches_brute_force() {
        let scores: Vec<f64> = (0..6).map(|i| i as f64).collect(); // ascending => reversed ranking
        let relevance = vec![1, 1, 0, 0, 0, 0];
        let r = RankedResult::new(scores.clone(), relevance.clone()).unwrap();
        assert!(
            (average_precision(&r).unwrap() - brute_force_ap(&scores, &relevance).unwrap()).abs()
                < 1e-12
        );
    }

    #[test]
    fn mean_ap_basics() {
        assert_eq!(mean_ap(&[0.5]).unwrap(), 0.5);
        assert_eq!(mean_ap(&[1.0, 0.0]).unwrap(), 0.5);
        assert!(mean_ap(&[]).is_err());
        let aps: Vec<f64> = (0..30).map(|i| (i as f64 * 0.731).fract()).collect();
        let direct = aps.iter().sum::<f64>() / 30.0;
        assert!((mean_ap(&aps).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn top_k_basics() {
        let row = vec![0.1, 0.9, 0.3, 0.2, 0.0, 0.5, 0.4, 0.35, 0.25, 0.15];
        assert_eq!(top_k_accuracy(std::slice::from_ref(&row), &[1], 5).unwrap(), 1.0);
        // class 4 has score 0.0, ranked 10th of 10
        assert_eq!(top_k_accuracy(std::slice::from_ref(&row), &[4], 5).unwrap(), 0.0);
        assert!(top_k_accuracy(&[row], &[1], 11).is_err());
    }

    #[test]
    fn top_k_matches_sort_oracle() {
        let mut state = 123456789u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..10).map(|_| next()).collect()).collect();
        let truth: Vec<usize> = (0..20).map(|i| i % 10).collect();
        for k in 1..=10 {
            let got = top_k_accuracy(&rows, &truth, k).unwrap();
            let mut correct = 0;
            for (row, &t) in rows.iter().zip(&truth) {
                let better = row
                    .iter()
                    .enumerate()
                    .filter(|&(j, &s)| s > row[t] || (s == row[t] && j < t))
                    .count();
                if better < k {
                    correct += 1;
                }
            }
            assert_eq!(got, correct as f64 / 20.0, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn ap_invariant_to_increasing_transforms(
            scores in proptest::collection::vec(-5.0f64..5.0, 1..12),
            pattern in 1u32..4096,
        ) {
            let n = scores.len();
            let relevance: Vec<u8> = (0..n).map(|i| ((pattern >> i) & 1) as u8).collect();
            prop_assume!(relevance.contains(&1));
            let base = average_precision(&RankedResult::new(scores.clone(), relevance.clone()).unwrap()).unwrap();
            let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
            let tanh: Vec<f64> = scores.iter().map(|s| s.tanh()).collect();
            let a = average_precision(&RankedResult::new(affine, relevance.clone()).unwrap()).unwrap();
            let t = average_precision(&RankedResult::new(tanh, relevance).unwrap()).unwrap();
            prop_assert!((base - a).abs() < 1e-12);
            prop_assert!((base - t).abs() < 1e-12);
        }

        #[test]
        fn mean_ap_permutation_invariant(aps in proptest::collection::vec(0.0f64..1.0, 1..20)) {
            let mut reversed = aps.clone();
            reversed.reverse();
            prop_assert!((mean_ap(&aps).unwrap() - mean_ap(&reversed).unwrap()).abs() < 1e-12);
        }
    }
}
