mod common;

use common::{all_model_kinds, check_model, check_op, GRAD_TOLERANCE, OP_CASES};

const SEEDS: u64 = 10;

#[test]
fn every_op_matches_central_differences() {
    let mut failures = Vec::new();
    for case in OP_CASES {
        for seed in 0..SEEDS {
            let err = check_op(case, seed);
            if !(err < GRAD_TOLERANCE) {
                failures.push(format!("{} seed {seed}: {err:.3e}", case.name));
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn every_model_matches_central_differences() {
    let mut failures = Vec::new();
    for kind in all_model_kinds() {
        for seed in 0..SEEDS {
            let err = check_model(kind, seed);
            if !(err < GRAD_TOLERANCE) {
                failures.push(format!("{kind:?} seed {seed}: {err:.3e}"));
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
