//! Layered episodic MDPs with truncated-Gaussian rewards.
//!
//! States are numbered globally, layer by layer: layer `h` owns the
//! contiguous range `offset[h]..offset[h] + layers[h]`. Transitions out of a
//! layer-`h` state are distributions over the states of layer `h + 1`,
//! indexed locally. The first layer holds the single fixed initial state.
//!
//! Decisions are deterministic policies `S -> A`, enumerated
//! lexicographically with state 0 as the most significant digit.

use rand::Rng;

use super::truncated::TruncatedGaussian;
use crate::decision::{Observation, Step};
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;
/// Largest supported policy count `|A|^|S|`.
pub const MAX_POLICIES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdpParams {
    /// State count per layer; `layers.len()` is the horizon H and
    /// `layers[0]` must be 1.
    pub layers: Vec<usize>,
    pub actions: usize,
    /// `transitions[s][a]` is a distribution over the next layer's states.
    /// Empty for last-layer states.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Pre-truncation reward centres `μ(s, a)` in `[-1, 1]`.
    pub reward_means: Vec<Vec<f64>>,
}

impl TabularMdpParams {
    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    pub fn num_states(&self) -> usize {
        self.layers.iter().sum()
    }

    /// Same layer structure and action count.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers == other.layers && self.actions == other.actions
    }
}

#[derive(Debug, Clone)]
pub struct TabularMdp {
    params: TabularMdpParams,
    offsets: Vec<usize>,
    layer_of: Vec<usize>,
    rewards: Vec<Vec<TruncatedGaussian>>,
    num_policies: usize,
}

impl TabularMdp {
    pub fn new(params: TabularMdpParams) -> Result<Self> {
        let h = params.layers.len();
        if h == 0 {
            return Err(Error::construction("tabular MDP needs at least one layer"));
        }
        if params.layers[0] != 1 {
            return Err(Error::construction(
                "first layer must contain exactly the fixed initial state",
            ));
        }
        if params.layers.contains(&0) {
            return Err(Error::construction("every layer needs at least one state"));
        }
        if params.actions == 0 {
            return Err(Error::construction("action count must be positive"));
        }
        let s_total = params.num_states();
        let mut num_policies: usize = 1;
        for _ in 0..s_total {
            num_policies = num_policies
                .checked_mul(params.actions)
                .filter(|&p| p <= MAX_POLICIES)
                .ok_or_else(|| {
                    Error::construction(format!(
                        "|A|^|S| = {}^{} policies exceeds the supported {MAX_POLICIES}",
                        params.actions, s_total
                    ))
                })?;
        }
        if params.transitions.len() != s_total || params.reward_means.len() != s_total {
            return Err(Error::construction(format!(
                "expected transition and reward tables for {s_total} states"
            )));
        }

        let mut offsets = Vec::with_capacity(h);
        let mut layer_of = Vec::with_capacity(s_total);
        let mut acc = 0;
        for (layer, &k) in params.layers.iter().enumerate() {
            offsets.push(acc);
            layer_of.extend(std::iter::repeat_n(layer, k));
            acc += k;
        }

        let mut rewards = Vec::with_capacity(s_total);
        for s in 0..s_total {
            let layer = layer_of[s];
            let means = &params.reward_means[s];
            let rows = &params.transitions[s];
            if means.len() != params.actions {
                return Err(Error::construction(format!(
                    "state {s}: expected {} reward means",
                    params.actions
                )));
            }
            let mut dists = Vec::with_capacity(params.actions);
            for (a, &mu) in means.iter().enumerate() {
                if !(-1.0..=1.0).contains(&mu) {
                    return Err(Error::construction(format!(
                        "reward mean μ({s},{a}) = {mu} outside [-1, 1]"
                    )));
                }
                dists.push(TruncatedGaussian::reward(mu)?);
            }
            rewards.push(dists);

            if layer + 1 == h {
                if rows.iter().any(|r| !r.is_empty()) {
                    return Err(Error::construction(format!(
                        "last-layer state {s} must not have transitions"
                    )));
                }
                continue;
            }
            if rows.len() != params.actions {
                return Err(Error::construction(format!(
                    "state {s}: expected {} transition rows",
                    params.actions
                )));
            }
            let width = params.layers[layer + 1];
            for (a, row) in rows.iter().enumerate() {
                if row.len() != width {
                    return Err(Error::construction(format!(
                        "p[{s},{a}] must cover the {width} states of layer {}",
                        layer + 1
                    )));
                }
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::construction(format!(
                        "p[{s},{a}] has an entry outside [0, 1]"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::construction(format!(
                        "p[{s},{a}] sums to {total}, not 1"
                    )));
                }
            }
        }

        Ok(Self {
            params,
            offsets,
            layer_of,
            rewards,
            num_policies,
        })
    }

    pub fn params(&self) -> &TabularMdpParams {
        &self.params
    }

    pub fn horizon(&self) -> usize {
        self.params.layers.len()
    }

    pub fn num_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn num_policies(&self) -> usize {
        self.num_policies
    }

    pub fn layer_of(&self, state: usize) -> usize {
        self.layer_of[state]
    }

    /// Global index of local state `local` in `layer`.
    pub fn global_state(&self, layer: usize, local: usize) -> usize {
        self.offsets[layer] + local
    }

    pub fn layer_states(&self, layer: usize) -> std::ops::Range<usize> {
        self.offsets[layer]..self.offsets[layer] + self.params.layers[layer]
    }

    pub fn reward_dist(&self, state: usize, action: usize) -> &TruncatedGaussian {
        &self.rewards[state][action]
    }

    /// Next-layer distribution (local indices) for `(state, action)`.
    pub fn transition(&self, state: usize, action: usize) -> &[f64] {
        &self.params.transitions[state][action]
    }

    /// Action the policy with index `policy` takes in `state`.
    pub fn policy_action(&self, policy: usize, state: usize) -> usize {
        let a = self.params.actions;
        let digits_after = self.num_states() - 1 - state;
        (policy / a.pow(digits_after as u32)) % a
    }

    /// Probability of being in each state of every layer under `policy`.
    pub fn state_distribution(&self, policy: usize) -> Vec<Vec<f64>> {
        let h = self.horizon();
        let mut dist = Vec::with_capacity(h);
        dist.push(vec![1.0]);
        for layer in 0..h - 1 {
            let mut next = vec![0.0; self.params.layers[layer + 1]];
            for (local, &mass) in dist[layer].iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let s = self.global_state(layer, local);
                let a = self.policy_action(policy, s);
                for (n, &p) in self.transition(s, a).iter().enumerate() {
                    next[n] += mass * p;
                }
            }
            dist.push(next);
        }
        dist
    }

    /// Expected total reward of `policy` (sum of truncated means along the
    /// policy-induced state distribution).
    pub fn expected_reward(&self, policy: usize) -> f64 {
        let dist = self.state_distribution(policy);
        let mut total = 0.0;
        for (layer, masses) in dist.iter().enumerate() {
            for (local, &mass) in masses.iter().enumerate() {
                let s = self.global_state(layer, local);
                let a = self.policy_action(policy, s);
                total += mass * self.rewards[s][a].mean();
            }
        }
        total
    }

    pub fn sample<R: Rng + ?Sized>(&self, policy: usize, rng: &mut R) -> Observation {
        let h = self.horizon();
        let mut steps = Vec::with_capacity(h);
        let mut s = 0;
        for layer in 0..h {
            let a = self.policy_action(policy, s);
            let reward = self.rewards[s][a].sample(rng);
            steps.push(Step {
                state: s,
                action: a,
                reward,
            });
            if layer + 1 < h {
                let row = self.transition(s, a);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut next = row.len() - 1;
                for (i, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        next = i;
                        break;
                    }
                }
                // Guard against a zero-probability tail picked up by round-off.
                while row[next] == 0.0 && next > 0 {
                    next -= 1;
                }
                s = self.global_state(layer + 1, next);
            }
        }
        Observation::Trajectory(steps)
    }

    /// `Σ_h [ln p[s_h,a_h](s_{h+1}) + ln r[s_h,a_h](r_h)]`, or `-∞` for
    /// trajectories the policy cannot produce.
    pub fn log_density(&self, policy: usize, steps: &[Step]) -> f64 {
        let h = self.horizon();
        if steps.len() != h || steps[0].state != 0 {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for (layer, step) in steps.iter().enumerate() {
            let s = step.state;
            if s >= self.num_states() || self.layer_of[s] != layer {
                return f64::NEG_INFINITY;
            }
            if step.action != self.policy_action(policy, s) {
                return f64::NEG_INFINITY;
            }
            total += self.rewards[s][step.action].ln_pdf(step.reward);
            if layer + 1 < h {
                let next = steps[layer + 1].state;
                let range = self.layer_states(layer + 1);
                if !range.contains(&next) {
                    return f64::NEG_INFINITY;
                }
                total += self.transition(s, step.action)[next - range.start].ln();
            }
        }
        total
    }
}
