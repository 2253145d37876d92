use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig};
use super::{fmt_f64, split_seed};
use crate::complexity::{Complexity, ComplexityCurve, ComplexityProblem, MONOTONE_TOL};
use crate::decision::{FallbackReason, HypothesisFamily, RunRecord};
use crate::error::{Error, Result};
use crate::t2c::{self, run_etc, run_t2c, run_ucb, T2cSchedule, MAX_ESCALATIONS};

pub const RUNS_HEADER: &str =
    "run_id,seed,algorithm,n,instance_id,final_regret,accepted,mle_correct,committed_correct,init_rounds,ident_rounds,wall_time_ms";
pub const CHECKPOINTS_HEADER: &str = "run_id,t,cum_regret";

/// What one run contributes to the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: usize,
    pub seed: u64,
    pub final_regret: f64,
    pub accepted: bool,
    /// The estimate's optimal decision matches the truth's.
    pub mle_correct: bool,
    pub committed_correct: bool,
    /// Committed to a decision that is suboptimal for the truth.
    pub false_commit: bool,
    pub init_rounds: usize,
    pub ident_rounds: usize,
    pub wall_time_ms: u64,
    pub checkpoint_regret: Vec<f64>,
    pub fallback: Option<FallbackReason>,
    pub ident_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub algorithm: Algorithm,
    pub n: usize,
    pub seeds: usize,
    pub instance_id: usize,
    pub family_size: usize,
    pub dropped_ties: usize,
    pub checkpoints: Vec<usize>,
    pub mean_regret: Vec<f64>,
    /// `1.96 · sd / √seeds` with the sample standard deviation.
    pub ci_half_width: Vec<f64>,
    pub accept_rate: f64,
    pub correct_commit_rate: f64,
    pub false_commit_rate: f64,
    pub mle_correct_rate: f64,
    pub fallback_rate: f64,
    /// `ll(n)^{1/4}`.
    pub reference_budget: f64,
    /// `C(f, ll(n)^{1/4})`, `+∞` when infeasible.
    pub reference_literal: f64,
    /// Smallest doubling of the reference budget at which the program is
    /// feasible (the cap T2C reaches when it escalates).
    pub effective_budget: f64,
    /// `C(f, effective_budget)`.
    pub reference: f64,
    pub curve: ComplexityCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub aggregate: AggregateResult,
    pub runs: Vec<RunSummary>,
}

/// Mean and 95% normal half-width of `values` (two-pass, sample variance).
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, 1.96 * var.sqrt() / k.sqrt())
}

fn summarize(
    run_id: usize,
    seed: u64,
    rec: &RunRecord,
    family: &HypothesisFamily,
    truth: usize,
    checkpoints: &[usize],
    wall_time_ms: u64,
) -> RunSummary {
    let best = family.instance(truth).optimal_decision();
    let mle_correct = rec
        .mle_index
        .is_some_and(|i| family.instance(i).optimal_decision() == best);
    RunSummary {
        run_id,
        seed,
        final_regret: rec.cumulative_regret(),
        accepted: rec.accepted,
        mle_correct,
        committed_correct: rec.committed_decision == Some(best),
        false_commit: rec.committed_decision.is_some_and(|d| d != best),
        init_rounds: rec.init_end,
        ident_rounds: rec.ident_end - rec.init_end,
        wall_time_ms,
        checkpoint_regret: rec.regret_at(checkpoints),
        fallback: rec.fallback,
        ident_budget: rec.ident_budget,
    }
}

fn run_one(
    config: &ExperimentConfig,
    family: &HypothesisFamily,
    truth: usize,
    schedule: Option<&T2cSchedule>,
    run_id: usize,
) -> Result<RunSummary> {
    let seed = split_seed(config.base_seed, run_id as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let env = family.instance(truth);
    let rec = match config.algorithm {
        Algorithm::T2c => run_t2c(family, truth, schedule.expect("t2c schedule"), &mut rng)?,
        Algorithm::Ucb => run_ucb(env, config.n, &mut rng),
        Algorithm::Etc => {
            let m = config
                .etc_m
                .unwrap_or_else(|| ((config.n as f64).ln() / t2c::ll(config.n as f64)).ceil() as usize);
            run_etc(env, config.n, m, &mut rng)
        }
    };
    let wall = if config.record_wall_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(summarize(run_id, seed, &rec, family, truth, &config.checkpoints, wall))
}

/// Cap `b·2^k` for the smallest `k` at which the program is feasible.
pub(crate) fn escalate(problem: &ComplexityProblem, start: f64, n: f64) -> Result<(f64, Complexity)> {
    let mut budget = start;
    let mut sol = problem.solve(budget)?;
    for _ in 0..MAX_ESCALATIONS {
        if sol.is_feasible() || budget * 2.0 > n {
            break;
        }
        budget *= 2.0;
        sol = problem.solve(budget)?;
    }
    Ok((budget, sol))
}

/// `10², 10³, …` below `n`, then `n`.
pub fn curve_schedule(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (2..16).map(|k| 10f64.powi(k)).filter(|&x| x < n as f64).collect();
    v.push(n as f64);
    v
}

/// Run every seed and aggregate, without writing files.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (family, dropped_ties) = config.build_family()?;
    let truth = config.truth_index(&family)?;
    let schedule = match config.algorithm {
        Algorithm::T2c => Some(
            T2cSchedule::new(config.n, family.num_decisions())?.with_policy(config.on_infeasible),
        ),
        _ => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;

    let (runs, reference) = pool.install(|| {
        let runs = (0..config.seeds)
            .into_par_iter()
            .map(|i| run_one(config, &family, truth, schedule.as_ref(), i))
            .collect::<Result<Vec<_>>>();
        let reference = reference_values(config, &family, truth);
        (runs, reference)
    });
    let runs = runs?;
    let (reference_budget, reference_literal, effective_budget, reference_value, curve) = reference?;

    let k = runs.len() as f64;
    let rate = |pred: &dyn Fn(&RunSummary) -> bool| runs.iter().filter(|r| pred(r)).count() as f64 / k;
    let mut mean_regret = Vec::new();
    let mut ci_half_width = Vec::new();
    for c in 0..config.checkpoints.len() {
        let vals: Vec<f64> = runs.iter().map(|r| r.checkpoint_regret[c]).collect();
        let (m, h) = mean_ci(&vals);
        mean_regret.push(m);
        ci_half_width.push(h);
    }
    let aggregate = AggregateResult {
        algorithm: config.algorithm,
        n: config.n,
        seeds: config.seeds,
        instance_id: truth,
        family_size: family.len(),
        dropped_ties,
        checkpoints: config.checkpoints.clone(),
        mean_regret,
        ci_half_width,
        accept_rate: rate(&|r| r.accepted),
        correct_commit_rate: rate(&|r| r.committed_correct),
        false_commit_rate: rate(&|r| r.false_commit),
        mle_correct_rate: rate(&|r| r.mle_correct),
        fallback_rate: rate(&|r| r.fallback.is_some()),
        reference_budget,
        reference_literal,
        effective_budget,
        reference: reference_value,
        curve,
    };
    Ok(ExperimentOutput { aggregate, runs })
}

type References = (f64, f64, f64, f64, ComplexityCurve);

fn reference_values(config: &ExperimentConfig, family: &HypothesisFamily, truth: usize) -> Result<References> {
    let f = family.instance(truth);
    let problem = ComplexityProblem::new(f, family)?;
    let nf = config.n as f64;
    let budget = t2c::ll(nf).powf(0.25);
    let literal = problem.solve(budget)?.value();
    let (effective, sol) = escalate(&problem, budget, nf)?;
    let points = curve_schedule(config.n)
        .into_iter()
        .map(|m| Ok((m, problem.solve(m)?.value())))
        .collect::<Result<Vec<_>>>()?;
    let curve = ComplexityCurve {
        limit_estimate: points.last().expect("non-empty schedule").1,
        points,
    };
    if !curve.is_non_increasing(MONOTONE_TOL) {
        return Err(Error::Solver(format!("complexity curve increases: {:?}", curve.points)));
    }
    Ok((budget, literal, effective, sol.value(), curve))
}

/// `runs.csv`, `checkpoints.csv` and `summary.txt` into `dir`.
pub fn write_outputs(config: &ExperimentConfig, output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut runs = String::from(RUNS_HEADER);
    runs.push('\n');
    let mut cps = String::from(CHECKPOINTS_HEADER);
    cps.push('\n');
    let b = |x: bool| u8::from(x);
    for r in &output.runs {
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.seed,
            config.algorithm,
            config.n,
            output.aggregate.instance_id,
            fmt_f64(r.final_regret),
            b(r.accepted),
            b(r.mle_correct),
            b(r.committed_correct),
            r.init_rounds,
            r.ident_rounds,
            r.wall_time_ms
        );
        for (t, v) in config.checkpoints.iter().zip(&r.checkpoint_regret) {
            let _ = writeln!(cps, "{},{},{}", r.run_id, t, fmt_f64(*v));
        }
    }
    let write = |name: &str, text: &str| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write("runs.csv", &runs)?;
    write("checkpoints.csv", &cps)?;
    write("summary.txt", &summary_text(&output.aggregate))
}

pub fn summary_text(a: &AggregateResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "algorithm={}", a.algorithm);
    let _ = writeln!(s, "n={}", a.n);
    let _ = writeln!(s, "seeds={}", a.seeds);
    let _ = writeln!(s, "instance_id={}", a.instance_id);
    let _ = writeln!(s, "family_size={}", a.family_size);
    let _ = writeln!(s, "dropped_ties={}", a.dropped_ties);
    for ((t, m), h) in a.checkpoints.iter().zip(&a.mean_regret).zip(&a.ci_half_width) {
        let _ = writeln!(s, "regret@{t}={} ci95={}", fmt_f64(*m), fmt_f64(*h));
    }
    let _ = writeln!(s, "accept_rate={}", fmt_f64(a.accept_rate));
    let _ = writeln!(s, "correct_commit_rate={}", fmt_f64(a.correct_commit_rate));
    let _ = writeln!(s, "false_commit_rate={}", fmt_f64(a.false_commit_rate));
    let _ = writeln!(s, "mle_correct_rate={}", fmt_f64(a.mle_correct_rate));
    let _ = writeln!(s, "fallback_rate={}", fmt_f64(a.fallback_rate));
    let _ = writeln!(s, "reference_budget={}", fmt_f64(a.reference_budget));
    let _ = writeln!(s, "reference_literal={}", fmt_f64(a.reference_literal));
    let _ = writeln!(s, "effective_budget={}", fmt_f64(a.effective_budget));
    let _ = writeln!(s, "reference={}", fmt_f64(a.reference));
    for (n, c) in &a.curve.points {
        let _ = writeln!(s, "curve@{}={}", fmt_f64(*n), fmt_f64(*c));
    }
    s
}

/// [`execute`] followed by [`write_outputs`] into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult> {
    let output = execute(config)?;
    write_outputs(config, &output, &config.out)?;
    Ok(output.aggregate)
}
