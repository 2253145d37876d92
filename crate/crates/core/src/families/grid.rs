//! Finite grid coverings of the parametric families.

use super::{build_instance, BernoulliMabParams, GaussianMabParams, LinearBanditParams, Params};
use crate::decision::HypothesisFamily;
use crate::error::{Error, Result};

pub const DEFAULT_INSTANCE_CAP: usize = 1_000_000;

/// Lattice `lo, lo + step, ...` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    /// A single fixed value.
    pub fn point(v: f64) -> Self {
        Self {
            lo: v,
            hi: v,
            step: 1.0,
        }
    }

    fn validate(&self, i: usize) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::domain(format!("axis {i}: step must be positive")));
        }
        if !(self.lo <= self.hi) {
            return Err(Error::domain(format!("axis {i}: lo exceeds hi")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        snap((self.lo + i as f64 * self.step).min(self.hi))
    }
}

/// Grid over a family's free parameters.
///
/// Axes map onto: arm means (Gaussian), arm probabilities (Bernoulli), θ
/// coordinates (linear bandit; the action set comes from the template), or
/// reward means in state-major order (tabular). For tabular families
/// `transition_step` additionally enumerates every transition row over the
/// simplex lattice with that resolution; otherwise the template's
/// transitions are shared by every member.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub transition_step: Option<f64>,
    pub cap: usize,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self {
            axes,
            transition_step: None,
            cap: DEFAULT_INSTANCE_CAP,
        }
    }

    /// Same axis for each of `dim` parameters.
    pub fn uniform(dim: usize, lo: f64, hi: f64, step: f64) -> Self {
        Self::new(vec![Axis::new(lo, hi, step); dim])
    }
}

#[derive(Debug, Clone)]
pub struct GridFamily {
    pub family: HypothesisFamily,
    /// Lattice points rejected because their optimal decision is not unique.
    pub dropped_ties: usize,
}

fn snap(v: f64) -> f64 {
    let s = (v * 1e12).round() / 1e12;
    if s == 0.0 {
        0.0
    } else {
        s
    }
}

/// All compositions of `total` into `parts` non-negative integers, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Enumerate the lattice described by `grid`, using `template` for the
/// kind and the shared structure (action set, layer layout, transitions).
pub fn build_grid_family(template: &Params, grid: &GridSpec) -> Result<GridFamily> {
    for (i, a) in grid.axes.iter().enumerate() {
        a.validate(i)?;
    }
    let expected = match template {
        Params::GaussianMab(p) => p.means.len(),
        Params::BernoulliMab(p) => p.probs.len(),
        Params::LinearBandit(p) => p.theta.len(),
        Params::TabularMdp(p) => p.reward_means.iter().map(Vec::len).sum(),
    };
    if grid.axes.len() != expected {
        return Err(Error::domain(format!(
            "{} grid needs {expected} axes, got {}",
            template.kind(),
            grid.axes.len()
        )));
    }

    // Transition-row lattices (tabular only).
    let mut row_choices: Vec<(usize, usize, Vec<Vec<f64>>)> = Vec::new();
    if let (Params::TabularMdp(p), Some(step)) = (template, grid.transition_step) {
        let resolution = (1.0 / step).round();
        if !(step > 0.0) || resolution < 1.0 || (resolution * step - 1.0).abs() > 1e-9 {
            return Err(Error::domain("transition step must be 1/k for a positive integer k"));
        }
        let m = resolution as usize;
        for (s, rows) in p.transitions.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                if row.is_empty() {
                    continue;
                }
                let points = compositions(m, row.len())
                    .into_iter()
                    .map(|c| c.into_iter().map(|k| snap(k as f64 / m as f64)).collect())
                    .collect();
                row_choices.push((s, a, points));
            }
        }
    } else if grid.transition_step.is_some() {
        return Err(Error::domain("transition_step only applies to tabular grids"));
    }

    let mut count: u128 = grid.axes.iter().map(|a| a.len() as u128).product();
    for (s, a, _) in &row_choices {
        if let Params::TabularMdp(p) = template {
            let width = p.transitions[*s][*a].len() as u128;
            let m = (1.0 / grid.transition_step.unwrap()).round() as u128;
            count = count.saturating_mul(binomial(m + width - 1, width - 1));
        }
    }
    if count > grid.cap as u128 {
        return Err(Error::Size {
            count,
            cap: grid.cap,
        });
    }

    let mut dims: Vec<usize> = grid.axes.iter().map(Axis::len).collect();
    dims.extend(row_choices.iter().map(|(_, _, pts)| pts.len()));
    let n_axes = grid.axes.len();

    let mut instances = Vec::new();
    let mut dropped_ties = 0;
    let mut idx = vec![0usize; dims.len()];
    loop {
        let values: Vec<f64> = (0..n_axes).map(|i| grid.axes[i].value(idx[i])).collect();
        let params = match template {
            Params::GaussianMab(_) => Params::GaussianMab(GaussianMabParams { means: values }),
            Params::BernoulliMab(_) => Params::BernoulliMab(BernoulliMabParams { probs: values }),
            Params::LinearBandit(p) => Params::LinearBandit(LinearBanditParams {
                actions: p.actions.clone(),
                theta: values,
            }),
            Params::TabularMdp(p) => {
                let mut q = p.clone();
                let mut it = values.into_iter();
                for row in q.reward_means.iter_mut() {
                    for v in row.iter_mut() {
                        *v = it.next().expect("axis count checked");
                    }
                }
                for (k, (s, a, pts)) in row_choices.iter().enumerate() {
                    q.transitions[*s][*a] = pts[idx[n_axes + k]].clone();
                }
                Params::TabularMdp(q)
            }
        };
        match build_instance(params) {
            Ok(inst) => instances.push(inst),
            Err(Error::NonUniqueOptimum { .. }) => dropped_ties += 1,
            Err(e) => return Err(e),
        }

        // Odometer, last coordinate fastest.
        let mut k = dims.len();
        loop {
            if k == 0 {
                let family = HypothesisFamily::new(instances)?;
                return Ok(GridFamily {
                    family,
                    dropped_ties,
                });
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}
