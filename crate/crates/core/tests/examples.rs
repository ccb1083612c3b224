macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(dataset_stats, "dataset_stats.rs");
example!(qubo_solvers, "qubo_solvers.rs");
example!(planted_recovery, "planted_recovery.rs");
example!(balanced_regimes, "balanced_regimes.rs");
example!(ratings_to_signs, "ratings_to_signs.rs");
example!(pq_sweep, "pq_sweep.rs");

#[test]
fn dataset_stats_runs() {
    dataset_stats::run_example().expect("dataset_stats example");
}

#[test]
fn qubo_solvers_runs() {
    qubo_solvers::run_example().expect("qubo_solvers example");
}

#[test]
fn planted_recovery_runs() {
    planted_recovery::run_example().expect("planted_recovery example");
}

#[test]
fn balanced_regimes_runs() {
    balanced_regimes::run_example().expect("balanced_regimes example");
}

#[test]
fn ratings_to_signs_runs() {
    ratings_to_signs::run_example().expect("ratings_to_signs example");
}

#[test]
fn pq_sweep_runs() {
    pq_sweep::run_example().expect("pq_sweep example");
}
