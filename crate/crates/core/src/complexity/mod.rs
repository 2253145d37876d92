//! The allocation program `C(f, n)`:
//!
//! ```text
//! C(f, n) = min_w  Σ_π w_π Δ(f, π)
//!           s.t.   Σ_π w_π KL(f[π] ‖ g[π]) ≥ 1   for every g with π*(g) ≠ π*(f)
//!                  0 ≤ w_π ≤ n
//! ```
//!
//! over a finite hypothesis family, solved by constraint generation around a
//! dense simplex. Zero-gap decisions cost nothing, so they are fixed at the
//! cap up front whenever any constraint exists; this shrinks every right-hand
//! side and drops constraints the cap alone already satisfies.

mod linear;
pub(crate) mod lp;

pub use linear::linear_bandit_allocation;

use rayon::prelude::*;

use crate::decision::{HypothesisFamily, Instance};
use crate::divergence::{kl_row, weighted_sum};
use crate::error::{Error, Result};
use lp::LpOutcome;

/// A constraint counts as violated when `1 − Σ w KL` exceeds this.
pub const VIOLATION_TOL: f64 = 1e-9;
/// Tightness threshold for reporting binding alternatives.
pub const BINDING_TOL: f64 = 1e-7;
/// Slack allowed when checking that `C(f, n)` is non-increasing in `n`.
pub const MONOTONE_TOL: f64 = 1e-7;
/// Weight placed on a decision with infinite KL to satisfy an alternative
/// that the finite part of the allocation leaves uncovered.
pub const INF_KL_WEIGHT: f64 = 1e-9;
/// Scans over more alternatives than this run on the rayon pool.
const PAR_SCAN_MIN: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Family indices (or action indices, for the linear program) whose
    /// constraint is tight.
    pub binding_alternatives: Vec<usize>,
    pub n_cap: f64,
    /// Cuts added by constraint generation, or Newton steps for the linear
    /// program.
    pub iterations: usize,
    /// Whether some positive-gap decision sits at the cap.
    pub cap_binds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Complexity {
    Feasible(Allocation),
    /// No allocation with `‖w‖∞ ≤ n_cap` satisfies every constraint.
    Infeasible { n_cap: f64 },
}

impl Complexity {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible(_))
    }

    pub fn allocation(&self) -> Option<&Allocation> {
        match self {
            Self::Feasible(a) => Some(a),
            Self::Infeasible { .. } => None,
        }
    }

    pub fn into_allocation(self) -> Option<Allocation> {
        match self {
            Self::Feasible(a) => Some(a),
            Self::Infeasible { .. } => None,
        }
    }

    /// The program value, `+∞` when infeasible.
    pub fn value(&self) -> f64 {
        self.allocation().map_or(f64::INFINITY, |a| a.objective)
    }

    pub fn n_cap(&self) -> f64 {
        match self {
            Self::Feasible(a) => a.n_cap,
            Self::Infeasible { n_cap } => *n_cap,
        }
    }
}

#[derive(Debug, Clone)]
struct Alternative {
    index: usize,
    kl: Vec<f64>,
}

/// `f` together with the KL rows of all its alternatives, so that the program
/// can be re-solved for many caps without recomputing divergences.
#[derive(Debug, Clone)]
pub struct ComplexityProblem {
    gaps: Vec<f64>,
    alternatives: Vec<Alternative>,
}

impl ComplexityProblem {
    /// Errors if `f` is not a member of `family`.
    pub fn new(f: &Instance, family: &HypothesisFamily) -> Result<Self> {
        if !family.instance(0).is_compatible(f) || family.position(f).is_none() {
            return Err(Error::domain("instance is not a member of the hypothesis family"));
        }
        let best = f.optimal_decision();
        let build = |(index, g): (usize, &Instance)| {
            (g.optimal_decision() != best).then(|| Alternative {
                index,
                kl: kl_row(f, g),
            })
        };
        let members = family.instances();
        let alternatives: Vec<Alternative> = if members.len() > PAR_SCAN_MIN {
            members.par_iter().enumerate().filter_map(build).collect()
        } else {
            members.iter().enumerate().filter_map(build).collect()
        };
        Ok(Self {
            gaps: f.gaps().to_vec(),
            alternatives,
        })
    }

    pub fn num_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    pub fn alternative_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alternatives.iter().map(|a| a.index)
    }

    /// Most violated alternative under `w` as `(family index, 1 − Σ w KL)`,
    /// lowest index on ties; `None` when nothing is violated beyond
    /// [`VIOLATION_TOL`].
    pub fn separate(&self, w: &[f64]) -> Option<(usize, f64)> {
        let scores = |a: &Alternative| 1.0 - weighted_sum(w, &a.kl);
        most_violated(&self.alternatives, scores).map(|(k, v)| (self.alternatives[k].index, v))
    }

    pub fn solve(&self, n: f64) -> Result<Complexity> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::domain(format!("cap n = {n} must be positive and finite")));
        }
        let p = self.gaps.len();
        if self.alternatives.is_empty() {
            return Ok(Complexity::Feasible(Allocation {
                weights: vec![0.0; p],
                objective: 0.0,
                binding_alternatives: Vec::new(),
                n_cap: n,
                iterations: 0,
                cap_binds: false,
            }));
        }
        let sub: Vec<usize> = (0..p).filter(|&i| self.gaps[i] > 0.0).collect();
        let fixed: Vec<usize> = (0..p).filter(|&i| self.gaps[i] == 0.0).collect();

        // Split the constraints into those the LP must handle, those with an
        // infinite entry on a positive-gap decision, and those already met.
        let mut finite: Vec<(usize, Vec<f64>, f64)> = Vec::new();
        let mut infinite: Vec<usize> = Vec::new();
        for (k, alt) in self.alternatives.iter().enumerate() {
            let base: f64 = fixed.iter().map(|&i| if alt.kl[i] > 0.0 { n * alt.kl[i] } else { 0.0 }).sum();
            let rhs = 1.0 - base;
            if rhs <= 0.0 {
                continue;
            }
            let row: Vec<f64> = sub.iter().map(|&i| alt.kl[i]).collect();
            if row.iter().any(|v| v.is_infinite()) {
                infinite.push(k);
                continue;
            }
            if n * row.iter().sum::<f64>() < rhs {
                return Ok(Complexity::Infeasible { n_cap: n });
            }
            finite.push((k, row, rhs));
        }

        let costs: Vec<f64> = sub.iter().map(|&i| self.gaps[i]).collect();
        let mut x = vec![0.0; sub.len()];
        let mut active: Vec<usize> = Vec::new();
        let mut iterations = 0;
        loop {
            let score = |c: &(usize, Vec<f64>, f64)| c.2 - weighted_sum(&x, &c.1);
            let Some((pos, viol)) = most_violated(&finite, score) else {
                break;
            };
            if active.contains(&pos) {
                if viol <= BINDING_TOL {
                    break;
                }
                return Err(Error::Solver(format!(
                    "constraint generation re-selected an active cut (violation {viol:e})"
                )));
            }
            active.push(pos);
            iterations += 1;
            let rows: Vec<Vec<f64>> = active.iter().map(|&j| finite[j].1.clone()).collect();
            let rhs: Vec<f64> = active.iter().map(|&j| finite[j].2).collect();
            match lp::solve_covering(&costs, &rows, &rhs, n)? {
                LpOutcome::Optimal(sol) => x = sol.x,
                LpOutcome::Infeasible => return Ok(Complexity::Infeasible { n_cap: n }),
            }
        }

        let mut weights = vec![0.0; p];
        for &i in &fixed {
            weights[i] = n;
        }
        for (j, &i) in sub.iter().enumerate() {
            weights[i] = x[j];
        }
        // Any positive weight on an infinite-KL decision separates.
        for &k in &infinite {
            let alt = &self.alternatives[k];
            if weighted_sum(&weights, &alt.kl) >= 1.0 - VIOLATION_TOL {
                continue;
            }
            let target = sub
                .iter()
                .copied()
                .filter(|&i| alt.kl[i].is_infinite())
                .min_by(|&a, &b| self.gaps[a].total_cmp(&self.gaps[b]))
                .expect("alternative has an infinite entry");
            weights[target] = weights[target].max(INF_KL_WEIGHT.min(n));
        }

        let objective = weights.iter().zip(&self.gaps).map(|(w, g)| w * g).sum();
        let binding_alternatives = self
            .alternatives
            .iter()
            .filter(|a| (weighted_sum(&weights, &a.kl) - 1.0).abs() <= BINDING_TOL)
            .map(|a| a.index)
            .collect();
        let cap_binds = sub.iter().any(|&i| weights[i] >= n * (1.0 - 1e-9));
        Ok(Complexity::Feasible(Allocation {
            weights,
            objective,
            binding_alternatives,
            n_cap: n,
            iterations,
            cap_binds,
        }))
    }
}

/// Position of the largest score above [`VIOLATION_TOL`], lowest position on
/// ties. Deterministic whether or not the scan runs in parallel.
fn most_violated<T: Sync>(items: &[T], score: impl Fn(&T) -> f64 + Sync) -> Option<(usize, f64)> {
    let pick = |a: (usize, f64), b: (usize, f64)| {
        if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
            b
        } else {
            a
        }
    };
    let none = (usize::MAX, f64::NEG_INFINITY);
    let best = if items.len() > PAR_SCAN_MIN {
        items
            .par_iter()
            .enumerate()
            .map(|(k, it)| (k, score(it)))
            .reduce(|| none, pick)
    } else {
        items.iter().enumerate().map(|(k, it)| (k, score(it))).fold(none, pick)
    };
    (best.1 > VIOLATION_TOL).then_some(best)
}

/// `C(f, n)` with its optimal allocation.
pub fn solve_complexity(f: &Instance, family: &HypothesisFamily, n: f64) -> Result<Complexity> {
    ComplexityProblem::new(f, family)?.solve(n)
}

/// Exhaustive separation over every `g` in `family` with `π*(g) ≠ π*(f)`.
/// `f` need not be a member. Errors only on a length mismatch.
pub fn separation_oracle(f: &Instance, family: &HypothesisFamily, w: &[f64]) -> Result<Option<(usize, f64)>> {
    if w.len() != f.num_decisions() || !family.instance(0).is_compatible(f) {
        return Err(Error::domain("allocation does not match the decision space"));
    }
    let best = f.optimal_decision();
    let alts: Vec<(usize, &Instance)> = family
        .instances()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.optimal_decision() != best)
        .collect();
    let found = most_violated(&alts, |(_, g)| 1.0 - weighted_sum(w, &kl_row(f, g)));
    Ok(found.map(|(k, v)| (alts[k].0, v)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityCurve {
    /// `(n, C(f, n))`, with `+∞` where the program is infeasible.
    pub points: Vec<(f64, f64)>,
    /// Value at the largest `n`.
    pub limit_estimate: f64,
}

impl ComplexityCurve {
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.points.windows(2).all(|p| p[1].1 <= p[0].1 + tol)
    }
}

/// Solves at every `n` of an increasing schedule. Errors if the values are not
/// non-increasing within [`MONOTONE_TOL`].
pub fn complexity_curve(f: &Instance, family: &HypothesisFamily, n_schedule: &[f64]) -> Result<ComplexityCurve> {
    if n_schedule.is_empty() || n_schedule.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::domain("n schedule must be non-empty and strictly increasing"));
    }
    let problem = ComplexityProblem::new(f, family)?;
    let points = n_schedule
        .iter()
        .map(|&n| Ok((n, problem.solve(n)?.value())))
        .collect::<Result<Vec<_>>>()?;
    let curve = ComplexityCurve {
        limit_estimate: points.last().expect("non-empty").1,
        points,
    };
    if !curve.is_non_increasing(MONOTONE_TOL) {
        return Err(Error::Solver(format!("complexity curve increases: {:?}", curve.points)));
    }
    Ok(curve)
}

/// `w_i = 2n/(nΔ_i² − 3)` for positive gaps and `n` at the optimum. Feasible
/// for the unit-Gaussian program over the full continuous alternative set.
pub fn mab_closed_form_weights(gaps: &[f64], n: f64) -> Result<Vec<f64>> {
    if gaps.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
        return Err(Error::domain("gaps must be finite and non-negative"));
    }
    if let Some(min) = gaps.iter().copied().filter(|&g| g > 0.0).reduce(f64::min) {
        if n * min * min <= 3.0 {
            return Err(Error::domain(format!(
                "closed form needs n·Δ_min² > 3, got {}",
                n * min * min
            )));
        }
    }
    Ok(gaps
        .iter()
        .map(|&g| if g > 0.0 { 2.0 * n / (n * g * g - 3.0) } else { n })
        .collect())
}

/// `Σ_i w_i Δ_i` of the closed form.
pub fn mab_closed_form_objective(gaps: &[f64], n: f64) -> Result<f64> {
    let w = mab_closed_form_weights(gaps, n)?;
    Ok(w.iter().zip(gaps).filter(|(_, &g)| g > 0.0).map(|(w, g)| w * g).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{build_grid_family, build_instance, BernoulliMabParams, GaussianMabParams, GridSpec};

    fn gauss(means: &[f64]) -> Instance {
        build_instance(GaussianMabParams { means: means.to_vec() }).unwrap()
    }

    fn grid(step: f64) -> HypothesisFamily {
        let template = GaussianMabParams { means: vec![0.0, 0.0] }.into();
        let fam = build_grid_family(&template, &GridSpec::uniform(2, 0.0, 1.0, step)).unwrap();
        fam.family
    }

    #[test]
    fn two_arm_coarse_grid() {
        let fam = grid(0.1);
        let f = gauss(&[0.5, 0.0]);
        let a = solve_complexity(&f, &fam, 1e6).unwrap().into_allocation().unwrap();
        // Binding alternative (0.5, 0.6): w2 · 0.36 / 2 = 1.
        assert!((a.weights[1] - 2.0 / 0.36).abs() < 1e-9);
        assert!((a.objective - 0.5 * 2.0 / 0.36).abs() < 1e-9);
        assert_eq!(a.weights[0], 1e6);
        assert!(!a.binding_alternatives.is_empty());
        assert!(ComplexityProblem::new(&f, &fam).unwrap().separate(&a.weights).is_none());
    }

    #[test]
    fn no_alternatives_means_zero() {
        let f = gauss(&[0.5, 0.0]);
        let fam = HypothesisFamily::new(vec![f.clone(), gauss(&[0.6, 0.1])]).unwrap();
        let a = solve_complexity(&f, &fam, 100.0).unwrap().into_allocation().unwrap();
        assert_eq!(a.objective, 0.0);
        assert_eq!(a.weights, vec![0.0, 0.0]);
    }

    #[test]
    fn single_constraint_feasibility_threshold() {
        // KL per decision: arm 0 -> 0.02, arm 1 -> 0.04805. Infeasible iff n·0.06805 < 1.
        let f = gauss(&[0.5, 0.0]);
        let g = gauss(&[0.3, 0.31]);
        let fam = HypothesisFamily::new(vec![f.clone(), g]).unwrap();
        let threshold = 1.0 / 0.06805;
        assert!(!solve_complexity(&f, &fam, threshold * 0.999).unwrap().is_feasible());
        assert!(solve_complexity(&f, &fam, threshold * 1.001).unwrap().is_feasible());
    }

    #[test]
    fn non_member_is_rejected() {
        let fam = grid(0.1);
        let f = gauss(&[0.55, 0.0]);
        assert!(matches!(solve_complexity(&f, &fam, 10.0), Err(Error::Domain(_))));
    }

    #[test]
    fn bad_cap_is_rejected() {
        let fam = grid(0.5);
        let f = gauss(&[1.0, 0.0]);
        assert!(solve_complexity(&f, &fam, 0.0).is_err());
        assert!(solve_complexity(&f, &fam, f64::NAN).is_err());
    }

    #[test]
    fn infinite_kl_alternative_gets_token_weight() {
        let f = build_instance(BernoulliMabParams { probs: vec![0.9, 0.3, 0.5] }).unwrap();
        // KL(0.3 ‖ 1) = ∞ at arm 1; the other arms carry no information.
        let g = build_instance(BernoulliMabParams { probs: vec![0.9, 1.0, 0.5] }).unwrap();
        let fam = HypothesisFamily::new(vec![f.clone(), g]).unwrap();
        let a = solve_complexity(&f, &fam, 10.0).unwrap().into_allocation().unwrap();
        assert!(a.weights[1] > 0.0 && a.weights[1] <= INF_KL_WEIGHT);
        assert_eq!(a.weights[2], 0.0);
        assert!(separation_oracle(&f, &fam, &a.weights).unwrap().is_none());
    }

    #[test]
    fn separation_examples() {
        let fam = grid(0.1);
        let f = gauss(&[0.5, 0.0]);
        let (idx, viol) = separation_oracle(&f, &fam, &[0.0, 0.0]).unwrap().unwrap();
        assert_eq!(viol, 1.0);
        assert!(fam.instance(idx).optimal_decision() != f.optimal_decision());
        let w = mab_closed_form_weights(f.gaps(), 1e6).unwrap();
        assert!(separation_oracle(&f, &fam, &w).unwrap().is_none());
        assert!(separation_oracle(&f, &fam, &[1.0]).is_err());
    }

    #[test]
    fn closed_form_arithmetic() {
        let w = mab_closed_form_weights(&[0.0, 0.5], 1e6).unwrap();
        assert_eq!(w[0], 1e6);
        assert!((w[1] - 2e6 / (0.25e6 - 3.0)).abs() < 1e-12);
        let obj = mab_closed_form_objective(&[0.0, 0.5], 1e6).unwrap();
        assert!((obj - 4.00005).abs() < 1e-5);
        assert!(matches!(mab_closed_form_weights(&[0.0, 0.5], 10.0), Err(Error::Domain(_))));
        let far = mab_closed_form_objective(&[0.0, 0.5, 0.25], 1e12).unwrap();
        assert!((far - 12.0).abs() < 1e-9);
    }

    #[test]
    fn curve_is_non_increasing() {
        let fam = grid(0.1);
        let f = gauss(&[0.5, 0.0]);
        let c = complexity_curve(&f, &fam, &[1e2, 1e4, 1e6]).unwrap();
        assert_eq!(c.points.len(), 3);
        assert!(c.is_non_increasing(MONOTONE_TOL));
        assert_eq!(c.limit_estimate, c.points[2].1);
        let single = complexity_curve(&f, &fam, &[50.0]).unwrap();
        assert_eq!(single.limit_estimate, single.points[0].1);
        assert!(complexity_curve(&f, &fam, &[10.0, 5.0]).is_err());
    }
}
