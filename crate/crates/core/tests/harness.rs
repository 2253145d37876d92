use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use iodm_core::harness::experiment::{CHECKPOINTS_HEADER, RUNS_HEADER};
use iodm_core::harness::{execute, split_seed, write_outputs, Algorithm, ExperimentConfig};
use iodm_core::t2c::run_ucb;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn golden_config() -> ExperimentConfig {
    ExperimentConfig::from_file(data("golden.cfg")).unwrap()
}

#[test]
fn golden_csv() {
    let config = golden_config();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&config, &execute(&config).unwrap(), dir.path()).unwrap();
    for (produced, golden) in [("runs.csv", "golden_runs.csv"), ("checkpoints.csv", "golden_checkpoints.csv")] {
        let got = std::fs::read_to_string(dir.path().join(produced)).unwrap();
        let want = std::fs::read_to_string(data(golden)).unwrap();
        assert_eq!(got, want, "{produced} drifted from the golden copy");
    }
}

#[test]
fn csv_headers() {
    let config = golden_config();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&config, &execute(&config).unwrap(), dir.path()).unwrap();
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let cps = std::fs::read_to_string(dir.path().join("checkpoints.csv")).unwrap();
    assert_eq!(runs.lines().next(), Some(RUNS_HEADER));
    assert_eq!(cps.lines().next(), Some(CHECKPOINTS_HEADER));
    assert_eq!(RUNS_HEADER.split(',').count(), 12);
    assert_eq!(runs.lines().count(), 1 + config.seeds);
    assert_eq!(cps.lines().count(), 1 + config.seeds * config.checkpoints.len());
}

/// Welford's streaming mean and variance.
fn welford(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    (mean, m2 / (n as f64 - 1.0), n)
}

#[test]
fn aggregation_matches_streaming_pass() {
    let mut config = ExperimentConfig::from_file(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_arm.cfg")).unwrap();
    config.algorithm = Algorithm::Ucb;
    let config = config.with_overrides(Some(5_000), Some(40), Some(2), None).unwrap();
    let out = execute(&config).unwrap();
    let a = &out.aggregate;
    for (j, _) in a.checkpoints.iter().enumerate() {
        let (mean, var, k) = welford(out.runs.iter().map(|r| r.checkpoint_regret[j]));
        let ci = 1.96 * var.sqrt() / (k as f64).sqrt();
        assert!((mean - a.mean_regret[j]).abs() <= 1e-12 * mean.abs().max(1.0), "{mean} vs {}", a.mean_regret[j]);
        assert!((ci - a.ci_half_width[j]).abs() <= 1e-12 * ci.abs().max(1.0), "{ci} vs {}", a.ci_half_width[j]);
    }
    let accepted = out.runs.iter().filter(|r| r.accepted).count() as f64;
    assert_eq!(a.accept_rate, accepted / out.runs.len() as f64);
}

#[test]
fn single_ucb_run_matches_bookkeeping() {
    let mut config = golden_config();
    config.algorithm = Algorithm::Ucb;
    let config = config.with_overrides(Some(100), Some(1), None, None).unwrap();
    let out = execute(&config).unwrap();
    assert_eq!(out.runs.len(), 1);

    let (family, _) = config.build_family().unwrap();
    let truth = family.instance(config.truth_index(&family).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.base_seed, 0));
    let record = run_ucb(truth, 100, &mut rng);
    assert_eq!(record.horizon(), 100);
    assert_eq!(out.runs[0].seed, split_seed(config.base_seed, 0));
    assert_eq!(out.runs[0].final_regret, record.cumulative_regret());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let config = golden_config();
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        write_outputs(&config, &execute(&config).unwrap(), d.path()).unwrap();
    }
    for f in ["runs.csv", "checkpoints.csv", "summary.txt"] {
        assert_eq!(
            std::fs::read(dirs[0].path().join(f)).unwrap(),
            std::fs::read(dirs[1].path().join(f)).unwrap(),
            "{f}"
        );
    }
}
