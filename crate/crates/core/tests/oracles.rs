mod common;

use common::oracles::{all_sequences, direct_metrics, mode_oracle, pairwise_auc, TTEST_FIXTURES};
use moodseq::eval::{majority_vote, metrics, pooled_ttest, roc_micro_auc, welch_ttest, ConfusionMatrix};
use proptest::prelude::*;

fn normalised(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        vec![0.2; raw.len()]
    } else {
        raw.iter().map(|x| x / total).collect()
    }
}

fn pairs(max: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..=max).prop_flat_map(|n| (prop::collection::vec(0..5usize, n), prop::collection::vec(0..5usize, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_agree_with_direct_counts((preds, labels) in pairs(300)) {
        let report = metrics(&preds, &labels, 5).unwrap();
        let from_matrix = ConfusionMatrix::new(&preds, &labels, 5).unwrap().report();
        let (accuracy, per_class) = direct_metrics(&preds, &labels, 5);
        prop_assert!((report.accuracy - accuracy).abs() < 1e-12);
        prop_assert!((from_matrix.accuracy - accuracy).abs() < 1e-12);
        for (c, &(p, r, f)) in per_class.iter().enumerate() {
            for m in [&report.per_class[c], &from_matrix.per_class[c]] {
                prop_assert!((m.precision - p).abs() < 1e-12);
                prop_assert!((m.recall - r).abs() < 1e-12);
                prop_assert!((m.f1 - f).abs() < 1e-12);
            }
        }
        let macro_f1 = per_class.iter().map(|c| c.2).sum::<f64>() / 5.0;
        prop_assert!((report.macro_f1 - macro_f1).abs() < 1e-12);
        prop_assert!((from_matrix.macro_f1 - macro_f1).abs() < 1e-12);
    }

    #[test]
    fn micro_auc_matches_pairwise_oracle(
        rows in prop::collection::vec((prop::collection::vec(0u8..20, 5), 0..5usize), 2..=40),
    ) {
        // Small integer weights make ties common.
        let scores: Vec<Vec<f64>> = rows
            .iter()
            .map(|(s, _)| normalised(&s.iter().map(|&x| x as f64).collect::<Vec<_>>()))
            .collect();
        let labels: Vec<usize> = rows.iter().map(|(_, l)| *l).collect();
        let report = roc_micro_auc(&scores, &labels).unwrap();
        prop_assert!((report.micro_auc - pairwise_auc(&scores, &labels)).abs() < 1e-9);
    }

    #[test]
    fn micro_auc_matches_pairwise_oracle_continuous(
        rows in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 5), 0..5usize), 2..=40),
    ) {
        let scores: Vec<Vec<f64>> = rows.iter().map(|(s, _)| normalised(s)).collect();
        let labels: Vec<usize> = rows.iter().map(|(_, l)| *l).collect();
        let report = roc_micro_auc(&scores, &labels).unwrap();
        prop_assert!((report.micro_auc - pairwise_auc(&scores, &labels)).abs() < 1e-9);
    }
}

#[test]
fn micro_auc_at_two_hundred_pooled_pairs() {
    // 40 rows × 5 classes = 200 pooled (score, indicator) pairs.
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    let scores: Vec<Vec<f64>> = (0..40).map(|_| normalised(&(0..5).map(|_| next()).collect::<Vec<_>>())).collect();
    let labels: Vec<usize> = (0..40).map(|i| (i * 7) % 5).collect();
    let report = roc_micro_auc(&scores, &labels).unwrap();
    assert!((report.micro_auc - pairwise_auc(&scores, &labels)).abs() < 1e-9);
}

#[test]
fn majority_vote_matches_mode_enumeration() {
    let sequences = all_sequences();
    assert_eq!(sequences.len(), 5 + 25 + 125 + 625 + 3125);
    for seq in sequences {
        let counts: Vec<usize> = (0..5).map(|c| seq.iter().filter(|&&p| p == c).count()).collect();
        let vote = majority_vote("s", &seq, 5).unwrap();
        assert_eq!(vote.voted, mode_oracle(&seq, 5), "{seq:?}");
        assert_eq!(vote.tally, counts);
    }
}

#[test]
fn two_window_ties_go_to_the_more_severe_class() {
    for a in 0..5 {
        for b in 0..5 {
            assert_eq!(majority_vote("s", &[a, b], 5).unwrap().voted, a.max(b));
        }
    }
    assert_eq!(majority_vote("s", &[1, 3], 5).unwrap().voted, 3);
}

#[test]
fn welch_matches_scipy() {
    for (i, f) in TTEST_FIXTURES.iter().enumerate() {
        let w = welch_ttest(f.a, f.b).unwrap();
        assert!((w.t - f.welch_t).abs() < 1e-9, "fixture {i}: t {} vs {}", w.t, f.welch_t);
        assert!((w.p - f.welch_p).abs() < 1e-6, "fixture {i}: p {} vs {}", w.p, f.welch_p);
        let p = pooled_ttest(f.a, f.b).unwrap();
        assert!((p.t - f.pooled_t).abs() < 1e-9, "fixture {i}: pooled t");
        assert!((p.p - f.pooled_p).abs() < 1e-6, "fixture {i}: pooled p");
    }
}

#[test]
fn welch_is_antisymmetric_in_t() {
    for f in TTEST_FIXTURES {
        let ab = welch_ttest(f.a, f.b).unwrap();
        let ba = welch_ttest(f.b, f.a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-12);
        assert!((ab.p - ba.p).abs() < 1e-12);
    }
}
