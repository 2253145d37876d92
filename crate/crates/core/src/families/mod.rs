//! Concrete parametric families and finite grid families.

mod grid;
pub mod tabular;
pub mod truncated;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub use grid::{build_grid_family, Axis, GridFamily, GridSpec, DEFAULT_INSTANCE_CAP};
pub use tabular::{TabularMdp, TabularMdpParams};
pub use truncated::TruncatedGaussian;

use crate::decision::{Instance, Observation};
use crate::error::{Error, Result};
use crate::math::std_normal_ln_pdf;

/// Tolerance used when comparing parameter blocks for structural equality.
pub const PARAM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    GaussianMab,
    BernoulliMab,
    LinearBandit,
    TabularMdp,
}

impl FamilyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::GaussianMab => "gaussian-mab",
            FamilyKind::BernoulliMab => "bernoulli-mab",
            FamilyKind::LinearBandit => "linear-bandit",
            FamilyKind::TabularMdp => "tabular-mdp",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian-mab" => Ok(FamilyKind::GaussianMab),
            "bernoulli-mab" => Ok(FamilyKind::BernoulliMab),
            "linear-bandit" => Ok(FamilyKind::LinearBandit),
            "tabular-mdp" => Ok(FamilyKind::TabularMdp),
            other => Err(Error::domain(format!("unknown family kind `{other}`"))),
        }
    }
}

/// Unit-variance Gaussian arms.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMabParams {
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliMabParams {
    pub probs: Vec<f64>,
}

/// Finite action set in `R^d` with unit Gaussian noise around `<x, θ>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBanditParams {
    pub actions: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
}

impl LinearBanditParams {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn mean(&self, action: usize) -> f64 {
        dot(&self.actions[action], &self.theta)
    }
}

/// Unvalidated parameter block, tagged by family.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    GaussianMab(GaussianMabParams),
    BernoulliMab(BernoulliMabParams),
    LinearBandit(LinearBanditParams),
    TabularMdp(TabularMdpParams),
}

impl Params {
    pub fn kind(&self) -> FamilyKind {
        match self {
            Params::GaussianMab(_) => FamilyKind::GaussianMab,
            Params::BernoulliMab(_) => FamilyKind::BernoulliMab,
            Params::LinearBandit(_) => FamilyKind::LinearBandit,
            Params::TabularMdp(_) => FamilyKind::TabularMdp,
        }
    }

    /// Number of free parameters: arm means or probabilities, θ coordinates,
    /// or tabular reward means.
    pub fn free_len(&self) -> usize {
        match self {
            Params::GaussianMab(p) => p.means.len(),
            Params::BernoulliMab(p) => p.probs.len(),
            Params::LinearBandit(p) => p.theta.len(),
            Params::TabularMdp(p) => p.reward_means.iter().map(Vec::len).sum(),
        }
    }

    /// Copy of `self` with the free parameters replaced by `values`, in the
    /// same order as the grid axes.
    pub fn with_free_values(&self, values: &[f64]) -> Result<Params> {
        if values.len() != self.free_len() {
            return Err(Error::domain(format!(
                "{} needs {} parameters, got {}",
                self.kind(),
                self.free_len(),
                values.len()
            )));
        }
        let v = values.to_vec();
        Ok(match self {
            Params::GaussianMab(_) => Params::GaussianMab(GaussianMabParams { means: v }),
            Params::BernoulliMab(_) => Params::BernoulliMab(BernoulliMabParams { probs: v }),
            Params::LinearBandit(p) => Params::LinearBandit(LinearBanditParams {
                actions: p.actions.clone(),
                theta: v,
            }),
            Params::TabularMdp(p) => {
                let mut q = p.clone();
                let mut it = v.into_iter();
                for row in q.reward_means.iter_mut() {
                    for x in row.iter_mut() {
                        *x = it.next().expect("length checked");
                    }
                }
                Params::TabularMdp(q)
            }
        })
    }
}

impl From<GaussianMabParams> for Params {
    fn from(p: GaussianMabParams) -> Self {
        Params::GaussianMab(p)
    }
}

impl From<BernoulliMabParams> for Params {
    fn from(p: BernoulliMabParams) -> Self {
        Params::BernoulliMab(p)
    }
}

impl From<LinearBanditParams> for Params {
    fn from(p: LinearBanditParams) -> Self {
        Params::LinearBandit(p)
    }
}

impl From<TabularMdpParams> for Params {
    fn from(p: TabularMdpParams) -> Self {
        Params::TabularMdp(p)
    }
}

/// Validated model behind an [`Instance`].
#[derive(Debug, Clone)]
pub enum Model {
    GaussianMab(GaussianMabParams),
    BernoulliMab(BernoulliMabParams),
    LinearBandit(LinearBanditParams),
    TabularMdp(TabularMdp),
}

/// Validate `params` and build an instance with cached rewards and gaps.
pub fn build_instance(params: impl Into<Params>) -> Result<Instance> {
    let model = match params.into() {
        Params::GaussianMab(p) => {
            validate_arms(&p.means, -1.0, 1.0, "mean")?;
            Model::GaussianMab(p)
        }
        Params::BernoulliMab(p) => {
            validate_arms(&p.probs, 0.0, 1.0, "probability")?;
            Model::BernoulliMab(p)
        }
        Params::LinearBandit(p) => {
            validate_linear(&p)?;
            Model::LinearBandit(p)
        }
        Params::TabularMdp(p) => Model::TabularMdp(TabularMdp::new(p)?),
    };
    Instance::from_model(model)
}

fn validate_arms(values: &[f64], lo: f64, hi: f64, what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::construction("at least one arm is required"));
    }
    for (i, &v) in values.iter().enumerate() {
        if !(lo..=hi).contains(&v) {
            return Err(Error::construction(format!(
                "arm {i}: {what} {v} outside [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

fn validate_linear(p: &LinearBanditParams) -> Result<()> {
    let d = p.theta.len();
    if d == 0 || p.actions.is_empty() {
        return Err(Error::construction("linear bandit needs actions and a parameter"));
    }
    if p.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::construction("θ must be finite"));
    }
    for (i, x) in p.actions.iter().enumerate() {
        if x.len() != d {
            return Err(Error::construction(format!(
                "action {i} has dimension {}, expected {d}",
                x.len()
            )));
        }
        let norm = dot(x, x).sqrt();
        if norm > 1.0 + PARAM_TOL {
            return Err(Error::construction(format!(
                "action {i} has Euclidean norm {norm} > 1"
            )));
        }
    }
    let gram = DMatrix::from_fn(d, d, |i, j| p.actions.iter().map(|x| x[i] * x[j]).sum::<f64>());
    let min_eig = gram
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 1e-12 {
        return Err(Error::construction("action set is not full rank"));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= PARAM_TOL)
}

impl Model {
    pub fn kind(&self) -> FamilyKind {
        match self {
            Model::GaussianMab(_) => FamilyKind::GaussianMab,
            Model::BernoulliMab(_) => FamilyKind::BernoulliMab,
            Model::LinearBandit(_) => FamilyKind::LinearBandit,
            Model::TabularMdp(_) => FamilyKind::TabularMdp,
        }
    }

    pub fn num_decisions(&self) -> usize {
        match self {
            Model::GaussianMab(p) => p.means.len(),
            Model::BernoulliMab(p) => p.probs.len(),
            Model::LinearBandit(p) => p.actions.len(),
            Model::TabularMdp(m) => m.num_policies(),
        }
    }

    /// Reward range bound used to scale UCB confidence widths. Gaussian
    /// families report their unit noise scale.
    pub fn r_max(&self) -> f64 {
        match self {
            Model::GaussianMab(_) | Model::BernoulliMab(_) | Model::LinearBandit(_) => 1.0,
            Model::TabularMdp(m) => truncated::REWARD_HI * m.horizon() as f64,
        }
    }

    pub fn expected_rewards(&self) -> Vec<f64> {
        match self {
            Model::GaussianMab(p) => p.means.clone(),
            Model::BernoulliMab(p) => p.probs.clone(),
            Model::LinearBandit(p) => (0..p.actions.len()).map(|i| p.mean(i)).collect(),
            Model::TabularMdp(m) => (0..m.num_policies()).map(|pi| m.expected_reward(pi)).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, decision: usize, rng: &mut R) -> Observation {
        match self {
            Model::GaussianMab(p) => {
                let z: f64 = rng.sample(StandardNormal);
                Observation::Reward(p.means[decision] + z)
            }
            Model::BernoulliMab(p) => {
                let u: f64 = rng.random();
                Observation::Reward(if u < p.probs[decision] { 1.0 } else { 0.0 })
            }
            Model::LinearBandit(p) => {
                let z: f64 = rng.sample(StandardNormal);
                Observation::Reward(p.mean(decision) + z)
            }
            Model::TabularMdp(m) => m.sample(decision, rng),
        }
    }

    pub fn log_density(&self, decision: usize, obs: &Observation) -> f64 {
        match (self, obs) {
            (Model::GaussianMab(p), Observation::Reward(x)) => std_normal_ln_pdf(x - p.means[decision]),
            (Model::LinearBandit(p), Observation::Reward(x)) => std_normal_ln_pdf(x - p.mean(decision)),
            (Model::BernoulliMab(p), Observation::Reward(x)) => {
                let q = p.probs[decision];
                if *x == 1.0 {
                    q.ln()
                } else if *x == 0.0 {
                    (1.0 - q).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            (Model::TabularMdp(m), Observation::Trajectory(steps)) => m.log_density(decision, steps),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Same family, same decision space, same observation shape.
    pub fn compatible(&self, other: &Model) -> bool {
        match (self, other) {
            (Model::GaussianMab(a), Model::GaussianMab(b)) => a.means.len() == b.means.len(),
            (Model::BernoulliMab(a), Model::BernoulliMab(b)) => a.probs.len() == b.probs.len(),
            (Model::LinearBandit(a), Model::LinearBandit(b)) => {
                a.actions.len() == b.actions.len()
                    && a.actions.iter().zip(&b.actions).all(|(x, y)| close(x, y))
            }
            (Model::TabularMdp(a), Model::TabularMdp(b)) => a.params().same_shape(b.params()),
            _ => false,
        }
    }

    /// Parameter blocks equal within [`PARAM_TOL`].
    pub fn same_params(&self, other: &Model) -> bool {
        match (self, other) {
            (Model::GaussianMab(a), Model::GaussianMab(b)) => close(&a.means, &b.means),
            (Model::BernoulliMab(a), Model::BernoulliMab(b)) => close(&a.probs, &b.probs),
            (Model::LinearBandit(a), Model::LinearBandit(b)) => {
                self.compatible(other) && close(&a.theta, &b.theta)
            }
            (Model::TabularMdp(a), Model::TabularMdp(b)) => {
                let (pa, pb) = (a.params(), b.params());
                pa.same_shape(pb)
                    && pa.reward_means.iter().zip(&pb.reward_means).all(|(x, y)| close(x, y))
                    && pa.transitions.iter().zip(&pb.transitions).all(|(ra, rb)| {
                        ra.len() == rb.len() && ra.iter().zip(rb).all(|(x, y)| close(x, y))
                    })
            }
            _ => false,
        }
    }

    /// Flat parameter vector (means, probabilities, θ, or reward means
    /// followed by transition rows).
    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            Model::GaussianMab(p) => p.means.clone(),
            Model::BernoulliMab(p) => p.probs.clone(),
            Model::LinearBandit(p) => p.theta.clone(),
            Model::TabularMdp(m) => {
                let p = m.params();
                let mut v: Vec<f64> = p.reward_means.iter().flatten().copied().collect();
                v.extend(p.transitions.iter().flatten().flatten().copied());
                v
            }
        }
    }
}
