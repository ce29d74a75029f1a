mod common;

use common::gradient_suite;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..3 {
        for (name, err) in gradient_suite(seed) {
            assert!(err < 1e-4, "seed {seed}: {name} relative error {err:e}");
        }
    }
}
