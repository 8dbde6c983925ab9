mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: PROPERTY_CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn embeddings_are_permutation_equivariant(p in permutation_strategy(), seed in any::<u64>(), agg in aggregator_strategy()) {
        check_permutation_equivariance(p, seed, agg)?;
    }

    #[test]
    fn scores_are_symmetric(pts in people(2, 9), seed in any::<u64>(), agg in aggregator_strategy()) {
        check_score_symmetry(pts, seed, agg)?;
    }

    #[test]
    fn effort_angle_survives_rigid_motion(
        a in (-5.0..5.0f64, -5.0..5.0f64, -PI..PI),
        b in (-5.0..5.0f64, -5.0..5.0f64, -PI..PI),
        phi in -PI..PI,
        shift in (-10.0..10.0f64, -10.0..10.0f64),
    ) {
        check_rigid_invariance(a, b, phi, shift)?;
    }

    #[test]
    fn extracted_groups_partition_nodes((n, labels, extra) in partition_strategy()) {
        check_partition(n, labels, extra)?;
    }

    #[test]
    fn datasets_round_trip(ds in dataset_strategy()) {
        check_round_trip(ds)?;
    }
}
