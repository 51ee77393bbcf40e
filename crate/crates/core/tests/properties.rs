mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn protocol_distance_is_a_metric((a, b, c) in protocol_triple()) {
        metric_axioms(&a, &b, &c)?;
    }

    #[test]
    fn set_distances_are_bounded_by_the_average((a, b, _) in set_triple()) {
        bounded_by_average(&a, &b)?;
    }

    #[test]
    fn average_distance_splits_over_a_union((a, b, c) in set_triple()) {
        union_identity(&a, &b, &c)?;
    }

    #[test]
    fn mean_protocol_stays_in_bounds((a, _, _) in set_triple()) {
        mean_in_bounds(&a)?;
    }

    #[test]
    fn b0_is_monotone_in_epsilon(m in distance_matrix(), e1 in 0.0..2.2f64, e2 in 0.0..2.2f64) {
        epsilon_monotone(&m, e1, e2)?;
    }

    #[test]
    fn clustering_ignores_run_order((m, perm) in permuted_matrix(), eps in 0.0..2.2f64) {
        permutation_invariant(&m, &perm, eps)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sweep_is_deterministic(seed in any::<u64>(), grid in grid()) {
        sweep_deterministic(seed, &grid)?;
    }

    #[test]
    fn interrupted_sweep_resumes_identically(seed in any::<u64>(), grid in grid(), cut in 0usize..3) {
        sweep_resumes(seed, &grid, cut)?;
    }
}
