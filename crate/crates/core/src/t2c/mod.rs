//! Test-to-Commit.
//!
//! 1. Play every decision `⌈ln n / ll(n)⌉` times and compute the maximum
//!    likelihood member `f̂` of the family.
//! 2. Solve the allocation program for `f̂` at a small cap, play each decision
//!    `⌈((1+δ)ŵ_π + δ) ln n⌉` times and run the log-likelihood-ratio test
//!    against every alternative whose optimal decision differs.
//! 3. On acceptance commit to `π*(f̂)`; otherwise run UCB for the remaining
//!    rounds.
//!
//! Here `ll(n) = max(ln ln n, 1)`, `δ = ll(n)^{-1/4}` and the cap is
//! `ll(n)^{1/4}`.

mod ucb;

pub use ucb::{run_etc, run_ucb};

use rand::Rng;
use rayon::prelude::*;

use crate::complexity::{Complexity, ComplexityProblem};
use crate::decision::{Decision, FallbackReason, HypothesisFamily, Instance, Observation, Phase, Round, RunRecord};
use crate::error::{Error, Result};

/// Exploration rule used for the fallback step, recorded in every run.
pub const UCB_VARIANT: &str = "ucb1";
/// Smallest horizon accepted by [`T2cSchedule::new`].
pub const MIN_HORIZON: usize = 16;
/// Upper bound on cap doublings under [`InfeasiblePolicy::EscalateBudget`].
pub const MAX_ESCALATIONS: usize = 64;
const PAR_LLR_MIN: usize = 512;

/// `max(ln ln n, 1)`.
pub fn ll(n: f64) -> f64 {
    n.ln().ln().max(1.0)
}

/// What to do when the allocation program is infeasible at the schedule's cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfeasiblePolicy {
    /// Skip identification and run UCB for every remaining round.
    #[default]
    Ucb,
    /// Double the cap until the program is feasible, then proceed; fall back
    /// to UCB only if the resulting plan does not fit in the horizon.
    EscalateBudget,
}

impl std::str::FromStr for InfeasiblePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucb" => Ok(Self::Ucb),
            "escalate" => Ok(Self::EscalateBudget),
            _ => Err(Error::domain(format!("unknown infeasibility policy `{s}` (ucb|escalate)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2cSchedule {
    pub n: usize,
    pub num_decisions: usize,
    /// Plays of each decision in step 1.
    pub init_per_decision: usize,
    /// Total step-1 rounds, `|Π| · init_per_decision`.
    pub m_init: usize,
    pub delta: f64,
    /// Cap passed to the allocation program in step 2.
    pub ident_budget_param: f64,
    /// Test threshold `c`.
    pub threshold: f64,
    pub on_infeasible: InfeasiblePolicy,
}

impl T2cSchedule {
    pub fn new(n: usize, num_decisions: usize) -> Result<Self> {
        if n < MIN_HORIZON {
            return Err(Error::domain(format!("T2C needs n ≥ {MIN_HORIZON}, got {n}")));
        }
        if num_decisions == 0 {
            return Err(Error::domain("T2C needs at least one decision"));
        }
        let nf = n as f64;
        let ll = ll(nf);
        let init_per_decision = (nf.ln() / ll).ceil() as usize;
        Ok(Self {
            n,
            num_decisions,
            init_per_decision,
            m_init: num_decisions * init_per_decision,
            delta: ll.powf(-0.25).clamp(f64::MIN_POSITIVE, 1.0),
            ident_budget_param: ll.powf(0.25),
            threshold: nf.ln(),
            on_infeasible: InfeasiblePolicy::default(),
        })
    }

    pub fn with_threshold(mut self, c: f64) -> Self {
        self.threshold = c;
        self
    }

    pub fn with_policy(mut self, policy: InfeasiblePolicy) -> Self {
        self.on_infeasible = policy;
        self
    }

    pub fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MleEstimate {
    pub index: usize,
    /// Every member had log-likelihood `-∞`; index 0 was returned.
    pub degenerate: bool,
}

fn log_likelihood(g: &Instance, decisions: &[Decision], observations: &[Observation]) -> f64 {
    decisions
        .iter()
        .zip(observations)
        .map(|(&d, o)| g.log_density(d, o))
        .sum()
}

/// Maximum-likelihood member of `family`, lowest index on ties.
pub fn mle_estimate(family: &HypothesisFamily, decisions: &[Decision], observations: &[Observation]) -> Result<MleEstimate> {
    if decisions.is_empty() || decisions.len() != observations.len() {
        return Err(Error::domain("MLE needs a non-empty, aligned history"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, g) in family.instances().iter().enumerate() {
        let l = log_likelihood(g, decisions, observations);
        if l > best.1 {
            best = (i, l);
        }
    }
    Ok(MleEstimate {
        index: best.0,
        degenerate: best.1 == f64::NEG_INFINITY,
    })
}

/// `Σ_i ln f[π_i](o_i) − ln g[π_i](o_i)`; `-∞` when the history is impossible
/// under `f`, `+∞` when it is impossible only under `g`.
pub fn llr_statistic(f: &Instance, g: &Instance, decisions: &[Decision], observations: &[Observation]) -> f64 {
    let lf = log_likelihood(f, decisions, observations);
    if lf == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    lf - log_likelihood(g, decisions, observations)
}

/// The test event: `f̂` beats every `g` with `π*(g) ≠ π*(f̂)` by at least `c`.
/// Vacuously true when there is no such `g`.
pub fn llr_accept(
    f_hat: &Instance,
    family: &HypothesisFamily,
    decisions: &[Decision],
    observations: &[Observation],
    c: f64,
) -> bool {
    let best = f_hat.optimal_decision();
    let lf = log_likelihood(f_hat, decisions, observations);
    let beats = |g: &Instance| {
        g.optimal_decision() == best || {
            let lg = log_likelihood(g, decisions, observations);
            lf != f64::NEG_INFINITY && (lg == f64::NEG_INFINITY || lf - lg >= c)
        }
    };
    let members = family.instances();
    if members.len() * decisions.len().max(1) > PAR_LLR_MIN * 64 {
        members.par_iter().all(beats)
    } else {
        members.iter().all(beats)
    }
}

/// Hypothesis-test calibration: order `1 − λ`, mean Rényi divergence `β` over
/// the `m` rounds, and threshold `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestCalibration {
    pub lambda: f64,
    pub beta: f64,
    pub m: usize,
    pub c: f64,
}

impl TestCalibration {
    pub fn new(lambda: f64, beta: f64, m: usize, c: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::domain(format!("λ = {lambda} outside (0, 1)")));
        }
        if m == 0 {
            return Err(Error::domain("calibration needs m ≥ 1"));
        }
        if !(beta >= 0.0) {
            return Err(Error::domain("β must be non-negative"));
        }
        Ok(Self { lambda, beta, m, c })
    }

    /// `β = (1/m) Σ_i D_{1−λ}(P_i ‖ Q_i)` from per-round divergences.
    pub fn from_divergences(lambda: f64, renyi: &[f64], c: f64) -> Result<Self> {
        let m = renyi.len();
        let beta = if m == 0 { 0.0 } else { renyi.iter().sum::<f64>() / m as f64 };
        Self::new(lambda, beta, m, c)
    }
}

/// `(e^{−c}, e^{−λ(mβ − c)})`. Values above 1 are vacuous and returned as is.
pub fn chernoff_stein_bounds(calib: &TestCalibration) -> (f64, f64) {
    let false_accept = (-calib.c).exp();
    let false_reject = (-calib.lambda * (calib.m as f64 * calib.beta - calib.c)).exp();
    (false_accept, false_reject)
}

/// Per-decision play counts `⌈((1+δ)ŵ_π + δ) ln n⌉`.
pub fn identification_counts(w_hat: &[f64], schedule: &T2cSchedule) -> Vec<usize> {
    counts_for(w_hat, schedule.delta, schedule.ln_n())
}

/// [`identification_counts`] with explicit `δ` and `ln n`.
pub fn counts_for(w_hat: &[f64], delta: f64, ln_n: f64) -> Vec<usize> {
    w_hat
        .iter()
        .map(|&w| (((1.0 + delta) * w + delta) * ln_n).ceil() as usize)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationPlan {
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
    /// Cap at which the program was solved.
    pub budget: f64,
}

impl IdentificationPlan {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// The multiset of decisions, grouped by decision in index order.
    pub fn decisions(&self) -> Vec<Decision> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(Decision(i), c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Ready(IdentificationPlan),
    Infeasible { budget: f64 },
}

fn plan_at(problem: &ComplexityProblem, schedule: &T2cSchedule, budget: f64) -> Result<PlanOutcome> {
    Ok(match problem.solve(budget)? {
        Complexity::Feasible(a) => PlanOutcome::Ready(IdentificationPlan {
            counts: identification_counts(&a.weights, schedule),
            weights: a.weights,
            budget,
        }),
        Complexity::Infeasible { .. } => PlanOutcome::Infeasible { budget },
    })
}

/// Step-2 plan for `f̂` at the schedule's cap, without escalation.
pub fn identification_plan(f_hat: &Instance, family: &HypothesisFamily, schedule: &T2cSchedule) -> Result<PlanOutcome> {
    let problem = ComplexityProblem::new(f_hat, family)?;
    plan_at(&problem, schedule, schedule.ident_budget_param)
}

/// Like [`identification_plan`], doubling the cap while the program is
/// infeasible and the cap stays below `n`.
pub fn escalated_identification_plan(
    f_hat: &Instance,
    family: &HypothesisFamily,
    schedule: &T2cSchedule,
) -> Result<PlanOutcome> {
    let problem = ComplexityProblem::new(f_hat, family)?;
    let mut budget = schedule.ident_budget_param;
    let mut outcome = plan_at(&problem, schedule, budget)?;
    for _ in 0..MAX_ESCALATIONS {
        if matches!(outcome, PlanOutcome::Ready(_)) || budget * 2.0 > schedule.n as f64 {
            break;
        }
        budget *= 2.0;
        outcome = plan_at(&problem, schedule, budget)?;
    }
    Ok(outcome)
}

fn play<R: Rng + ?Sized>(env: &Instance, d: Decision, t: usize, phase: Phase, rng: &mut R) -> Round {
    let observation = env.sample(d, rng);
    Round {
        t,
        decision: d,
        observation,
        regret: env.gap(d),
        phase,
    }
}

fn fallback<R: Rng + ?Sized>(rec: &mut RunRecord, env: &Instance, n: usize, reason: FallbackReason, rng: &mut R) {
    let first = rec.rounds.len() + 1;
    rec.fallback = Some(reason);
    let rest = ucb::ucb_rounds(env, n - rec.rounds.len(), first, Phase::Fallback, rng);
    rec.rounds.extend(rest);
}

/// One T2C run of exactly `schedule.n` rounds against `family[truth_index]`.
pub fn run_t2c<R: Rng + ?Sized>(
    family: &HypothesisFamily,
    truth_index: usize,
    schedule: &T2cSchedule,
    rng: &mut R,
) -> Result<RunRecord> {
    if truth_index >= family.len() {
        return Err(Error::domain(format!(
            "truth index {truth_index} out of range for a family of {}",
            family.len()
        )));
    }
    if schedule.num_decisions != family.num_decisions() {
        return Err(Error::domain("schedule was built for a different decision count"));
    }
    let env = family.instance(truth_index);
    let n = schedule.n;
    let k = family.num_decisions();
    let mut rec = RunRecord::empty();
    rec.rounds.reserve(n);

    // Step 1: uniform exploration in round-robin order.
    let init = schedule.m_init.min(n);
    for step in 0..init {
        let d = Decision(step % k);
        rec.rounds.push(play(env, d, step + 1, Phase::Init, rng));
    }
    rec.init_end = init;
    rec.ident_end = init;
    let (decisions, observations): (Vec<Decision>, Vec<Observation>) =
        rec.rounds.iter().map(|r| (r.decision, r.observation.clone())).unzip();
    let mle = mle_estimate(family, &decisions, &observations)?;
    rec.mle_index = Some(mle.index);
    rec.mle_degenerate = mle.degenerate;
    let f_hat = family.instance(mle.index);
    if init == n {
        rec.fallback = Some(FallbackReason::BudgetExhausted);
        return Ok(rec);
    }

    // Step 2: identification.
    let outcome = match schedule.on_infeasible {
        InfeasiblePolicy::Ucb => identification_plan(f_hat, family, schedule)?,
        InfeasiblePolicy::EscalateBudget => escalated_identification_plan(f_hat, family, schedule)?,
    };
    let plan = match outcome {
        PlanOutcome::Ready(plan) => plan,
        PlanOutcome::Infeasible { budget } => {
            rec.ident_budget = Some(budget);
            fallback(&mut rec, env, n, FallbackReason::IdentificationInfeasible, rng);
            return Ok(rec);
        }
    };
    rec.ident_budget = Some(plan.budget);
    if plan.total() > n - init {
        fallback(&mut rec, env, n, FallbackReason::BudgetExhausted, rng);
        return Ok(rec);
    }
    let mut ident_obs = Vec::with_capacity(plan.total());
    let ident_decisions = plan.decisions();
    for &d in &ident_decisions {
        let round = play(env, d, rec.rounds.len() + 1, Phase::Identification, rng);
        ident_obs.push(round.observation.clone());
        rec.rounds.push(round);
    }
    rec.ident_end = rec.rounds.len();

    // Step 3: commit or fall back.
    if llr_accept(f_hat, family, &ident_decisions, &ident_obs, schedule.threshold) {
        rec.accepted = true;
        let d = f_hat.optimal_decision();
        rec.committed_decision = Some(d);
        for t in rec.rounds.len() + 1..=n {
            rec.rounds.push(play(env, d, t, Phase::Commit, rng));
        }
    } else {
        fallback(&mut rec, env, n, FallbackReason::Rejected, rng);
    }
    Ok(rec)
}
