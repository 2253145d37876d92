//! Decisions, observations, instances and hypothesis families.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::families::{FamilyKind, Model};

/// Ties between expected rewards closer than this are rejected.
pub const UNIQUENESS_TOL: f64 = 1e-9;

/// Index into the decision list of an instance (arm, action or policy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decision(pub usize);

impl Decision {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One step of a tabular trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// Scalar reward (bandit families).
    Reward(f64),
    /// Length-H trajectory (tabular family).
    Trajectory(Vec<Step>),
}

impl Observation {
    /// `R(o)`: the reward itself, or the sum of trajectory rewards.
    pub fn reward(&self) -> f64 {
        match self {
            Observation::Reward(r) => *r,
            Observation::Trajectory(steps) => steps.iter().map(|s| s.reward).sum(),
        }
    }
}

/// A validated instance `f` with its expected rewards, optimal decision and
/// gaps cached at construction.
#[derive(Debug, Clone)]
pub struct Instance {
    model: Model,
    rewards: Vec<f64>,
    gaps: Vec<f64>,
    optimal: Decision,
}

impl Instance {
    pub(crate) fn from_model(model: Model) -> Result<Self> {
        let rewards = model.expected_rewards();
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::construction("expected rewards must be finite"));
        }
        let mut best = 0;
        for (i, &r) in rewards.iter().enumerate() {
            if r > rewards[best] {
                best = i;
            }
        }
        let top = rewards[best];
        let runner_up = rewards
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &r)| r)
            .fold(f64::NEG_INFINITY, f64::max);
        if top - runner_up <= UNIQUENESS_TOL {
            return Err(Error::NonUniqueOptimum {
                gap: top - runner_up,
            });
        }
        let gaps = rewards.iter().map(|&r| top - r).collect();
        Ok(Self {
            model,
            rewards,
            gaps,
            optimal: Decision(best),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.model.kind()
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn num_decisions(&self) -> usize {
        self.rewards.len()
    }

    pub fn r_max(&self) -> f64 {
        self.model.r_max()
    }

    fn check(&self, d: Decision) -> Result<()> {
        if d.0 >= self.rewards.len() {
            return Err(Error::domain(format!(
                "decision {} out of range for {} decisions",
                d.0,
                self.rewards.len()
            )));
        }
        Ok(())
    }

    /// `R_f(π)`.
    pub fn expected_reward(&self, d: Decision) -> Result<f64> {
        self.check(d)?;
        Ok(self.rewards[d.0])
    }

    pub fn expected_rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn optimal_decision(&self) -> Decision {
        self.optimal
    }

    /// `Δ(f, π)`. Panics if `d` is out of range.
    pub fn gap(&self, d: Decision) -> f64 {
        self.gaps[d.0]
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// Smallest positive gap, `None` for single-decision instances.
    pub fn min_gap(&self) -> Option<f64> {
        self.gaps.iter().copied().filter(|&g| g > 0.0).reduce(f64::min)
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }

    /// Draw `o ~ f[π]`. Panics if `d` is out of range.
    pub fn sample<R: Rng + ?Sized>(&self, d: Decision, rng: &mut R) -> Observation {
        self.model.sample(d.0, rng)
    }

    /// `ln f[π](o)`; `-∞` for observations outside the support or of the
    /// wrong kind.
    pub fn log_density(&self, d: Decision, obs: &Observation) -> f64 {
        self.model.log_density(d.0, obs)
    }

    pub fn is_compatible(&self, other: &Instance) -> bool {
        self.model.compatible(&other.model)
    }

    /// Structural equality of parameter blocks.
    pub fn same_params(&self, other: &Instance) -> bool {
        self.model.same_params(&other.model)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.model.flat_params()
    }
}

/// A finite, ordered, non-empty list of compatible instances.
///
/// Cloning is cheap; the instance list is shared.
#[derive(Debug, Clone)]
pub struct HypothesisFamily {
    instances: Arc<[Instance]>,
}

impl HypothesisFamily {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| Error::domain("hypothesis family must be non-empty"))?;
        if let Some(i) = instances.iter().position(|g| !first.is_compatible(g)) {
            return Err(Error::domain(format!(
                "instance {i} is not structurally compatible with instance 0"
            )));
        }
        Ok(Self {
            instances: instances.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instance(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn kind(&self) -> FamilyKind {
        self.instances[0].kind()
    }

    pub fn num_decisions(&self) -> usize {
        self.instances[0].num_decisions()
    }

    /// Index of the first member structurally equal to `f`.
    pub fn position(&self, f: &Instance) -> Option<usize> {
        self.instances.iter().position(|g| g.same_params(f))
    }
}

/// Which part of a run produced a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Identification,
    Commit,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    /// 1-based round index.
    pub t: usize,
    pub decision: Decision,
    pub observation: Observation,
    /// `Δ(f*, π_t)`.
    pub regret: f64,
    pub phase: Phase,
}

/// Why a T2C run skipped the commit step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackReason {
    /// The likelihood-ratio test rejected the estimate.
    Rejected,
    /// The allocation program had no solution within the usable budget.
    IdentificationInfeasible,
    /// The budget ran out before the identification step could finish.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rounds: Vec<Round>,
    /// Rounds `1..=init_end` belong to initialisation.
    pub init_end: usize,
    /// Rounds `init_end+1..=ident_end` belong to identification.
    pub ident_end: usize,
    pub accepted: bool,
    pub mle_index: Option<usize>,
    /// Set when every member had `-∞` log-likelihood and index 0 was used.
    pub mle_degenerate: bool,
    pub committed_decision: Option<Decision>,
    pub fallback: Option<FallbackReason>,
    /// Cap `n` passed to the allocation program in the identification step.
    pub ident_budget: Option<f64>,
    /// Exploration rule used after a rejection (recorded for reproducibility).
    pub fallback_algorithm: &'static str,
}

impl RunRecord {
    pub(crate) fn empty() -> Self {
        Self {
            rounds: Vec::new(),
            init_end: 0,
            ident_end: 0,
            accepted: false,
            mle_index: None,
            mle_degenerate: false,
            committed_decision: None,
            fallback: None,
            ident_budget: None,
            fallback_algorithm: crate::t2c::UCB_VARIANT,
        }
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.rounds.iter().map(|r| r.regret).sum()
    }

    /// Cumulative regret after each of the given round counts.
    pub fn regret_at(&self, checkpoints: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut acc = 0.0;
        let mut t = 0;
        for &cp in checkpoints {
            while t < cp.min(self.rounds.len()) {
                acc += self.rounds[t].regret;
                t += 1;
            }
            out.push(acc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{build_instance, BernoulliMabParams, GaussianMabParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expected_reward_and_gap() {
        let f = build_instance(GaussianMabParams { means: vec![0.7, 0.1] }).unwrap();
        assert_eq!(f.expected_reward(Decision(0)).unwrap(), 0.7);
        assert!(matches!(f.expected_reward(Decision(2)), Err(Error::Domain(_))));
        assert_eq!(f.gap(f.optimal_decision()), 0.0);
        assert!((f.gap(Decision(1)) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn degenerate_bernoulli_samples() {
        let f = build_instance(BernoulliMabParams { probs: vec![1.0, 0.0] }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(f.sample(Decision(0), &mut rng), Observation::Reward(1.0));
            assert_eq!(f.sample(Decision(1), &mut rng), Observation::Reward(0.0));
        }
    }

    #[test]
    fn same_seed_same_observation() {
        let f = build_instance(GaussianMabParams { means: vec![0.2, 0.0] }).unwrap();
        let a = f.sample(Decision(1), &mut ChaCha8Rng::seed_from_u64(9));
        let b = f.sample(Decision(1), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn log_density_reference_values() {
        let g = build_instance(GaussianMabParams { means: vec![0.0, -0.5] }).unwrap();
        assert!((g.log_density(Decision(0), &Observation::Reward(0.0)) + 0.918_938_533_204_672_7).abs() < 1e-15);
        let b = build_instance(BernoulliMabParams { probs: vec![0.25, 0.1] }).unwrap();
        assert_eq!(b.log_density(Decision(0), &Observation::Reward(1.0)), 0.25f64.ln());
        assert_eq!(b.log_density(Decision(0), &Observation::Reward(0.5)), f64::NEG_INFINITY);
        assert_eq!(
            g.log_density(Decision(0), &Observation::Trajectory(vec![])),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn family_rejects_mixed_shapes() {
        let a = build_instance(GaussianMabParams { means: vec![0.2, 0.0] }).unwrap();
        let b = build_instance(GaussianMabParams { means: vec![0.2, 0.0, 0.1] }).unwrap();
        assert!(HypothesisFamily::new(vec![a.clone(), b]).is_err());
        assert!(HypothesisFamily::new(vec![]).is_err());
        let fam = HypothesisFamily::new(vec![a.clone()]).unwrap();
        assert_eq!(fam.position(&a), Some(0));
    }

    #[test]
    fn regret_checkpoints() {
        let mut rec = RunRecord::empty();
        for t in 1..=10 {
            rec.rounds.push(Round {
                t,
                decision: Decision(0),
                observation: Observation::Reward(0.0),
                regret: 0.5,
                phase: Phase::Fallback,
            });
        }
        assert_eq!(rec.regret_at(&[1, 4, 10, 20]), vec![0.5, 2.0, 5.0, 5.0]);
        assert_eq!(rec.cumulative_regret(), 5.0);
    }
}
