mod common;

use common::checks::{run_attention, softmax, AttentionInstance};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = AttentionInstance> {
    (1usize..=3, 1usize..=12, 1usize..=6, 1usize..=5, 1usize..=6, any::<u64>(), -50.0f64..50.0).prop_flat_map(
        |(batch, steps, hidden, query, score, seed, shift)| {
            (
                prop::collection::vec(-3.0f64..3.0, batch * steps * hidden),
                prop::collection::vec(-3.0f64..3.0, batch * query),
            )
                .prop_map(move |(states, queries)| AttentionInstance {
                    batch,
                    steps,
                    hidden,
                    query,
                    score,
                    seed,
                    states,
                    queries,
                    shift,
                })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weights_are_a_distribution(inst in instance()) {
        let out = run_attention(&inst);
        for row in out.weights.chunks(inst.steps) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&a| a >= 0.0));
        }
    }

    #[test]
    fn single_step_context_is_the_state(inst in instance()) {
        let one = inst.single_step();
        let out = run_attention(&one);
        prop_assert!(out.weights.iter().all(|&a| a == 1.0));
        prop_assert_eq!(out.context, one.states);
    }

    #[test]
    fn weights_ignore_a_common_score_shift(inst in instance()) {
        let out = run_attention(&inst);
        for (row, scores) in out.weights.chunks(inst.steps).zip(out.scores.chunks(inst.steps)) {
            let shifted: Vec<f64> = scores.iter().map(|e| e + inst.shift).collect();
            for (a, b) in row.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn context_is_the_weighted_state_sum(inst in instance()) {
        let out = run_attention(&inst);
        for b in 0..inst.batch {
            for j in 0..inst.hidden {
                let mut c = 0.0;
                for t in 0..inst.steps {
                    c += out.weights[b * inst.steps + t] * inst.states[(b * inst.steps + t) * inst.hidden + j];
                }
                prop_assert!((out.context[b * inst.hidden + j] - c).abs() < 1e-9);
            }
        }
    }
}
