mod common;

use common::*;

const TOL: f64 = 1e-4;

#[test]
fn every_op_matches_central_differences() {
    for seed in 0..100 {
        for r in gradient_trial(seed).unwrap() {
            assert!(r.error < TOL, "seed {seed}: {} relative error {:e}", r.op, r.error);
        }
    }
}

#[test]
fn tiny_model_matches_central_differences() {
    let e = model_gradient_error(3).unwrap();
    assert!(e < 1e-3, "relative error {e:e}");
}
