//! Randomized model-level properties, each checked against independent
//! full-joint enumeration on freshly generated small models.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

mod common;

fn run(result: Result<(), String>) -> Result<(), TestCaseError> {
    result.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Interventional joints and marginals equal brute-force enumeration.
    #[test]
    fn factorization_matches_enumeration(seed in any::<u64>()) {
        run(common::check_factorization(seed))?;
    }

    /// Hard, local, composite, and mixture shifts all conserve total mass.
    #[test]
    fn shifts_conserve_probability_mass(seed in any::<u64>()) {
        run(common::check_mass_conservation(seed))?;
    }

    /// Context masses and joint-weighted utilities — the inputs to every
    /// policy and regret computation — equal brute-force enumeration.
    #[test]
    fn decision_statistics_match_enumeration(seed in any::<u64>()) {
        run(common::check_decision_tables(seed))?;
    }

    /// Mixture queries combine component queries linearly, for joints and for
    /// decision statistics alike.
    #[test]
    fn mixtures_are_linear(seed in any::<u64>()) {
        run(common::check_mixture_linearity(seed))?;
    }

    /// Positive affine rescaling of raw utility leaves the optimal policy and
    /// every regret unchanged.
    #[test]
    fn affine_utility_rescaling_is_invisible(seed in any::<u64>()) {
        run(common::check_affine_invariance(seed))?;
    }

    /// A hard setting behaves exactly like the constant local map.
    #[test]
    fn hard_settings_equal_constant_local_maps(seed in any::<u64>()) {
        run(common::check_hard_is_constant_local(seed))?;
    }
}
