#[path = "support/invariants.rs"]
mod invariants;

use invariants::CHECKS;

fn run(name: &str) {
    let (_, check) = CHECKS.iter().find(|(n, _)| *n == name).expect("registered check");
    if let Err(msg) = check() {
        panic!("{name}: {msg}");
    }
}

macro_rules! checks {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                run(stringify!($name));
            }
        )*

        #[test]
        fn every_check_has_a_test() {
            let listed = [$(stringify!($name)),*];
            for (name, _) in CHECKS {
                assert!(listed.contains(name), "{name} has no test");
            }
        }
    };
}

checks!(
    model_variance_fields_nonnegative,
    model_integrated_variance_mean,
    model_theta_chaining,
    model_increment_correlations,
    fst_constant_preservation,
    fst_spatial_convergence,
    fst_linearity,
    fst_translation,
    regression_in_span_recovery,
    regression_unit_weights,
    regression_gram_psd,
    regression_truncation_monotone,
    clustering_weight_conservation,
    clustering_full_cut_is_exact,
    clustering_monotone_fidelity,
    mlmc_telescoping,
    mlmc_interpolation_idempotent,
    pricer_direct_above_low,
    pricer_bermudan_dominance,
    pricer_more_dates,
    pricer_single_crossing,
    baselines_lsmc_deterministic,
    baselines_fd_self_convergence,
);
