mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn step_conserves_rates(case in arb_case()) {
        check_step(&case)?;
    }

    #[test]
    fn more_capacity_never_lowers_throughput(case in arb_case(), pick in 0usize..8, level in any::<bool>()) {
        check_monotone_capacity(&case, pick, level)?;
    }

    #[test]
    fn ds2_proposal_meets_busy_high(case in arb_case(), busy_high in 0.5f64..0.95) {
        check_ds2_consistency(&case, busy_high)?;
    }

    #[test]
    fn ds2_is_a_fixed_point_when_rates_do_not_depend_on_parallelism(case in arb_rate_stable_case()) {
        check_ds2_fixed_point(&case)?;
    }

    #[test]
    fn justin_changes_one_dimension(input in arb_justin_input()) {
        check_justin(&input)?;
    }

    #[test]
    fn justin_switched_off_is_ds2(case in arb_case()) {
        check_disabled_equals_ds2(&case)?;
    }

    #[test]
    fn hit_rate_monotone(c in (0.0f64..2000.0, 0.0f64..2000.0), s in (1.0f64..1e10, 1.0f64..1e10), reads in 0.5f64..4.0) {
        check_hit_rate_monotone(c, s, reads)?;
    }
}
