//! Seeded Monte-Carlo experiments, reports and the command-line front end.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod report;
pub mod validate;

pub use calibration::{run_calibration, CalibrationFamily, CalibrationReport, CalibrationSpec};
pub use config::{Algorithm, ExperimentConfig, FamilySpec, TruthSpec};
pub use experiment::{execute, run_experiment, write_outputs, AggregateResult, ExperimentOutput, RunSummary};
pub use report::{compare_to_complexity, ComparisonReport};
pub use validate::{validate_config, ValidationReport};

/// SplitMix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `i`: independent streams for every `(base, i)` without
/// coordination between workers.
pub fn split_seed(base: u64, i: u64) -> u64 {
    splitmix64(base.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Round-trip exact float text (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
