mod common {
    pub mod gradcheck;
}

use common::gradcheck::{run_suite, TOL};

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in [1, 2, 3] {
        let checks = run_suite(seed);
        assert_eq!(checks.len(), 36);
        for c in &checks {
            assert!(c.coordinates > 0);
            assert!(c.passed(), "seed {seed}, {}: worst {:.3e} > {TOL:e}", c.label, c.worst);
        }
    }
}
