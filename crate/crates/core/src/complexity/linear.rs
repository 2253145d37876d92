//! Allocation program for linear bandits over the continuous parameter space:
//!
//! ```text
//! min Σ_x w_x Δ_x   s.t.   ‖x* − x‖²_{H(w)⁻¹} ≤ Δ_x² / 2,   H(w) = Σ_x w_x x xᵀ,
//! ```
//!
//! with `w_{x*} = n` and `0 ≤ w_x ≤ n` elsewhere. Each constraint is convex in
//! `w` (matrix-fractional), so a log-barrier path with damped Newton steps
//! converges to the optimum.

use nalgebra::{DMatrix, DVector};

use super::{Allocation, Complexity};
use crate::error::{Error, Result};
use crate::families::{build_instance, LinearBanditParams};

const RESTARTS: usize = 3;
const MAX_NEWTON: usize = 200;
const GAP_TOL: f64 = 1e-10;
const BINDING_REL: f64 = 1e-6;

struct Setup {
    d: usize,
    n: f64,
    opt: DVector<f64>,
    sub: Vec<DVector<f64>>,
    gaps: Vec<f64>,
}

struct Point {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Setup {
    fn gram(&self, w: &[f64]) -> DMatrix<f64> {
        let mut h = &self.opt * self.opt.transpose() * self.n;
        for (x, &wx) in self.sub.iter().zip(w) {
            h += x * x.transpose() * wx;
        }
        h
    }

    /// `Δ_x²/2 − ‖x* − x‖²_{H⁻¹}` for every suboptimal action, `None` if `H`
    /// is not positive definite.
    fn slacks(&self, w: &[f64]) -> Option<Vec<f64>> {
        let chol = self.gram(w).cholesky()?;
        Some(
            self.sub
                .iter()
                .zip(&self.gaps)
                .map(|(x, &g)| {
                    let a = &self.opt - x;
                    0.5 * g * g - a.dot(&chol.solve(&a))
                })
                .collect(),
        )
    }

    fn interior(&self, w: &[f64]) -> bool {
        w.iter().all(|&v| v > 0.0 && v < self.n)
            && self.slacks(w).is_some_and(|s| s.iter().all(|&v| v > 0.0))
    }

    fn cost(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.gaps).map(|(w, g)| w * g).sum()
    }

    fn barrier(&self, w: &[f64], mu: f64) -> Option<f64> {
        if !self.interior(w) {
            return None;
        }
        let s = self.slacks(w)?;
        let logs: f64 = s.iter().map(|v| v.ln()).sum::<f64>()
            + w.iter().map(|&v| v.ln() + (self.n - v).ln()).sum::<f64>();
        Some(self.cost(w) - mu * logs)
    }

    fn evaluate(&self, w: &[f64], mu: f64) -> Option<Point> {
        let value = self.barrier(w, mu)?;
        let k = self.sub.len();
        let hinv = self.gram(w).cholesky()?.inverse();
        // cross[j][l] = x_jᵀ H⁻¹ x_l
        let hx: Vec<DVector<f64>> = self.sub.iter().map(|x| &hinv * x).collect();
        let mut grad = DVector::from_fn(k, |j, _| self.gaps[j] - mu / w[j] + mu / (self.n - w[j]));
        let mut hess = DMatrix::from_fn(k, k, |j, l| {
            if j == l {
                mu / (w[j] * w[j]) + mu / ((self.n - w[j]) * (self.n - w[j]))
            } else {
                0.0
            }
        });
        for (x, &g) in self.sub.iter().zip(&self.gaps) {
            let a = &self.opt - x;
            let u = &hinv * &a;
            let s = 0.5 * g * g - a.dot(&u);
            let proj: Vec<f64> = self.sub.iter().map(|y| y.dot(&u)).collect();
            // ∂q/∂w_j = −(x_jᵀu)²,  ∂²q/∂w_j∂w_l = 2 (x_jᵀu)(x_lᵀu)(x_jᵀH⁻¹x_l)
            let dq = DVector::from_fn(k, |j, _| -proj[j] * proj[j]);
            grad += &dq * (mu / s);
            for j in 0..k {
                for l in 0..k {
                    let d2 = 2.0 * proj[j] * proj[l] * self.sub[j].dot(&hx[l]);
                    hess[(j, l)] += mu * (dq[j] * dq[l] / (s * s) + d2 / s);
                }
            }
        }
        Some(Point { value, grad, hess })
    }

    /// Centre `w` for barrier weight `mu`. Returns Newton steps taken.
    fn center(&self, w: &mut Vec<f64>, mu: f64) -> Result<usize> {
        for step in 0..MAX_NEWTON {
            let pt = self
                .evaluate(w, mu)
                .ok_or_else(|| Error::Solver("iterate left the interior".into()))?;
            let mut h = pt.hess.clone();
            let dir = loop {
                if let Some(c) = h.clone().cholesky() {
                    break c.solve(&(-&pt.grad));
                }
                let ridge = 1e-12 * h.diagonal().amax().max(1.0);
                for j in 0..h.nrows() {
                    h[(j, j)] += ridge;
                }
            };
            let decrement = -pt.grad.dot(&dir);
            if decrement / 2.0 <= 1e-12 {
                return Ok(step);
            }
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
                if let Some(v) = self.barrier(&cand, mu) {
                    if v <= pt.value - 0.25 * t * decrement {
                        *w = cand;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-20 {
                    return Ok(step + 1);
                }
            }
        }
        Ok(MAX_NEWTON)
    }
}

/// Solves the linear-bandit program at cap `n`. Binding alternatives are the
/// indices of actions whose constraint is tight to relative `1e-6`.
pub fn linear_bandit_allocation(params: &LinearBanditParams, n: f64) -> Result<Complexity> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::domain(format!("cap n = {n} must be positive and finite")));
    }
    let inst = build_instance(params.clone())?;
    let best = inst.optimal_decision().0;
    let vec = |i: usize| DVector::from_column_slice(&params.actions[i]);
    let sub_idx: Vec<usize> = (0..params.actions.len()).filter(|&i| i != best).collect();
    let setup = Setup {
        d: params.dim(),
        n,
        opt: vec(best),
        sub: sub_idx.iter().map(|&i| vec(i)).collect(),
        gaps: sub_idx.iter().map(|&i| inst.gaps()[i]).collect(),
    };
    let finish = |w: &[f64], iterations: usize| {
        let mut weights = vec![0.0; params.actions.len()];
        weights[best] = n;
        for (&i, &v) in sub_idx.iter().zip(w) {
            weights[i] = v;
        }
        let slacks = setup.slacks(w).unwrap_or_default();
        let binding = sub_idx
            .iter()
            .zip(&slacks)
            .zip(&setup.gaps)
            .filter(|((_, &s), &g)| s <= BINDING_REL * 0.5 * g * g)
            .map(|((&i, _), _)| i)
            .collect();
        Complexity::Feasible(Allocation {
            objective: setup.cost(w),
            cap_binds: w.iter().any(|&v| v >= n * (1.0 - 1e-9)),
            weights,
            binding_alternatives: binding,
            n_cap: n,
            iterations,
        })
    };
    if sub_idx.is_empty() {
        return Ok(finish(&[], 0));
    }
    debug_assert_eq!(setup.d, setup.opt.len());

    // Feasibility is monotone in w, so test the full cap first.
    let full = vec![n; sub_idx.len()];
    match setup.slacks(&full) {
        Some(s) if s.iter().all(|&v| v > 0.0) => {}
        _ => return Ok(Complexity::Infeasible { n_cap: n }),
    }

    let mut last_err = None;
    for restart in 0..=RESTARTS {
        // Each restart starts closer to the cap, a larger floor on every weight.
        let mut frac: f64 = 1.0 - 0.5f64.powi(restart as i32 + 1);
        let mut w = vec![frac * n; sub_idx.len()];
        while !setup.interior(&w) && frac < 1.0 - 1e-15 {
            frac = 0.5 * (1.0 + frac);
            w = vec![frac * n; sub_idx.len()];
        }
        if !setup.interior(&w) {
            return Ok(Complexity::Infeasible { n_cap: n });
        }
        let m = (3 * sub_idx.len()) as f64;
        let mut mu = setup.cost(&w).max(1.0) / m;
        let mut steps = 0;
        let outcome: Result<()> = loop {
            match setup.center(&mut w, mu) {
                Ok(s) => steps += s,
                Err(e) => break Err(e),
            }
            if m * mu <= GAP_TOL * setup.cost(&w).max(1.0) {
                break Ok(());
            }
            mu *= 0.1;
        };
        match outcome {
            Ok(()) => return Ok(finish(&w, steps)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Solver("linear allocation failed".into())))
}
