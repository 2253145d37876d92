//! Dense simplex for the restricted covering LP
//!
//! ```text
//! min c·x  s.t.  K x ≥ r,  0 ≤ x ≤ u
//! ```
//!
//! solved through its dual `max r·y − u·1ᵀz  s.t.  Kᵀy − z ≤ c,  y, z ≥ 0`.
//! Costs are non-negative, so the slack basis of the dual is feasible and no
//! phase one is needed. Pivoting follows Bland's rule. The primal solution is
//! read off the reduced costs of the dual slacks.

use crate::error::{Error, Result};

pub const MAX_PIVOTS: usize = 1_000_000;
pub const DUALITY_GAP_TOL: f64 = 1e-7;
const EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
}

/// Solve the covering LP above. `rows[k]` and `rhs[k]` describe one `≥`
/// constraint; `c` must be non-negative.
pub(crate) fn solve_covering(c: &[f64], rows: &[Vec<f64>], rhs: &[f64], cap: f64) -> Result<LpOutcome> {
    solve_covering_with_limit(c, rows, rhs, cap, MAX_PIVOTS)
}

pub(crate) fn solve_covering_with_limit(
    c: &[f64],
    rows: &[Vec<f64>],
    rhs: &[f64],
    cap: f64,
    max_pivots: usize,
) -> Result<LpOutcome> {
    let p = c.len();
    let a = rows.len();
    debug_assert!(c.iter().all(|&ci| ci >= 0.0));
    debug_assert!(rows.iter().all(|r| r.len() == p) && rhs.len() == a);

    // Columns: y_0..y_{a-1}, z_0..z_{p-1}, s_0..s_{p-1}.
    let cols = a + 2 * p;
    let slack = |i: usize| a + p + i;
    let mut tab = vec![vec![0.0; cols]; p];
    for (i, row) in tab.iter_mut().enumerate() {
        for (k, kr) in rows.iter().enumerate() {
            row[k] = kr[i];
        }
        row[a + i] = -1.0;
        row[slack(i)] = 1.0;
    }
    let mut b = c.to_vec();
    let mut obj = vec![0.0; cols];
    obj[..a].copy_from_slice(rhs);
    for z in &mut obj[a..a + p] {
        *z = -cap;
    }
    let mut basis: Vec<usize> = (0..p).map(slack).collect();
    let mut reduced = obj.clone();

    let mut pivots = 0;
    while let Some(enter) = (0..cols).find(|&j| reduced[j] > EPS) {
        let mut leave: Option<usize> = None;
        for i in 0..p {
            if tab[i][enter] <= EPS {
                continue;
            }
            let ratio = b[i] / tab[i][enter];
            leave = match leave {
                None => Some(i),
                Some(l) => {
                    let best = b[l] / tab[l][enter];
                    if ratio < best || (ratio == best && basis[i] < basis[l]) {
                        Some(i)
                    } else {
                        Some(l)
                    }
                }
            };
        }
        // Unbounded dual: the primal has no feasible point.
        let Some(leave) = leave else {
            return Ok(LpOutcome::Infeasible);
        };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Solver(format!("simplex exceeded {max_pivots} pivots")));
        }
        let piv = tab[leave][enter];
        for v in &mut tab[leave] {
            *v /= piv;
        }
        b[leave] /= piv;
        let pivot_row = tab[leave].clone();
        for i in 0..p {
            if i == leave {
                continue;
            }
            let factor = tab[i][enter];
            if factor != 0.0 {
                for (v, pr) in tab[i].iter_mut().zip(&pivot_row) {
                    *v -= factor * pr;
                }
                b[i] -= factor * b[leave];
                if b[i] < 0.0 && b[i] > -EPS {
                    b[i] = 0.0;
                }
            }
        }
        let factor = reduced[enter];
        for (v, pr) in reduced.iter_mut().zip(&pivot_row) {
            *v -= factor * pr;
        }
        basis[leave] = enter;
    }

    let dual_objective: f64 = basis.iter().zip(&b).map(|(&j, &bi)| obj[j] * bi).sum();
    let x: Vec<f64> = (0..p)
        .map(|i| {
            let v = -reduced[slack(i)];
            if v > 0.0 { v.min(cap) } else { 0.0 }
        })
        .collect();
    let objective: f64 = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    if (objective - dual_objective).abs() > DUALITY_GAP_TOL * objective.abs().max(1.0) {
        return Err(Error::Solver(format!(
            "duality gap {} exceeds tolerance (primal {objective}, dual {dual_objective})",
            (objective - dual_objective).abs()
        )));
    }
    Ok(LpOutcome::Optimal(LpSolution {
        x,
        objective,
        dual_objective,
        pivots,
    }))
}
