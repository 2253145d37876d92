//! Monte-Carlo check of the likelihood-ratio test against its error bounds.
//!
//! `P` and `Q` are single-decision instances. A false accept is a history
//! drawn from `Q` whose statistic `Σ ln P/Q` reaches `c`; a false reject is a
//! history drawn from `P` whose statistic stays below `c`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::split_seed;
use crate::decision::{Decision, Instance, Observation};
use crate::divergence::{renyi, RenyiOrder};
use crate::error::{Error, Result};
use crate::families::{build_instance, BernoulliMabParams, GaussianMabParams};
use crate::t2c::{chernoff_stein_bounds, llr_statistic, TestCalibration};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationFamily {
    /// `P = N(shift, 1)`, `Q = N(0, 1)`.
    Gaussian,
    /// `P = Bernoulli(0.5 + shift)`, `Q = Bernoulli(0.5)`.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub family: CalibrationFamily,
    pub c: f64,
    pub trials: usize,
    pub m: usize,
    pub shift: f64,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub spec: CalibrationSpec,
    pub beta: f64,
    pub false_accept_rate: f64,
    pub false_accept_bound: f64,
    /// Monte-Carlo standard error at the bound, `sqrt(b(1−b)/trials)`.
    pub false_accept_sigma: f64,
    pub false_reject_rate: f64,
    pub false_reject_bound: f64,
    pub false_reject_sigma: f64,
}

impl CalibrationReport {
    pub fn false_accept_within(&self, sigmas: f64) -> bool {
        self.false_accept_rate <= self.false_accept_bound + sigmas * self.false_accept_sigma
    }

    pub fn false_reject_within(&self, sigmas: f64) -> bool {
        self.false_reject_rate <= self.false_reject_bound + sigmas * self.false_reject_sigma
    }
}

fn sigma_at(bound: f64, trials: usize) -> f64 {
    let b = bound.clamp(0.0, 1.0);
    (b * (1.0 - b) / trials as f64).sqrt()
}

fn pair(spec: &CalibrationSpec) -> Result<(Instance, Instance)> {
    Ok(match spec.family {
        CalibrationFamily::Gaussian => (
            build_instance(GaussianMabParams { means: vec![spec.shift] })?,
            build_instance(GaussianMabParams { means: vec![0.0] })?,
        ),
        CalibrationFamily::Bernoulli => (
            build_instance(BernoulliMabParams { probs: vec![0.5 + spec.shift] })?,
            build_instance(BernoulliMabParams { probs: vec![0.5] })?,
        ),
    })
}

pub fn run_calibration(spec: &CalibrationSpec) -> Result<CalibrationReport> {
    if spec.trials == 0 || spec.m == 0 {
        return Err(Error::domain("trials and m must be positive"));
    }
    let (p, q) = pair(spec)?;
    let order = RenyiOrder::from_lambda(spec.lambda)?;
    let beta = renyi(&p, &q, Decision(0), order)?;
    let calib = TestCalibration::new(spec.lambda, beta, spec.m, spec.c)?;
    let (fa_bound, fr_bound) = chernoff_stein_bounds(&calib);
    let decisions = vec![Decision(0); spec.m];

    let outcomes: Vec<(bool, bool)> = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(spec.seed, i as u64));
            let from_q: Vec<Observation> = (0..spec.m).map(|_| q.sample(Decision(0), &mut rng)).collect();
            let from_p: Vec<Observation> = (0..spec.m).map(|_| p.sample(Decision(0), &mut rng)).collect();
            let false_accept = llr_statistic(&p, &q, &decisions, &from_q) >= spec.c;
            let false_reject = llr_statistic(&p, &q, &decisions, &from_p) < spec.c;
            (false_accept, false_reject)
        })
        .collect();
    let trials = spec.trials as f64;
    let fa = outcomes.iter().filter(|o| o.0).count() as f64 / trials;
    let fr = outcomes.iter().filter(|o| o.1).count() as f64 / trials;
    Ok(CalibrationReport {
        spec: spec.clone(),
        beta,
        false_accept_rate: fa,
        false_accept_bound: fa_bound,
        false_accept_sigma: sigma_at(fa_bound, spec.trials),
        false_reject_rate: fr,
        false_reject_bound: fr_bound,
        false_reject_sigma: sigma_at(fr_bound, spec.trials),
    })
}
