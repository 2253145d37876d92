//! KL and Rényi divergences between the observation distributions of two
//! instances at a fixed decision.
//!
//! Closed forms are used for every family. Gaussian and truncated-Gaussian
//! forms are cross-checked in tests against [`renyi_quadrature_oracle`] and
//! [`kl_quadrature_oracle`]; the tabular forms against Monte-Carlo estimates.
//! Divergences that are infinite because of a support mismatch are returned
//! as `f64::INFINITY`.

use crate::decision::{Decision, Instance};
use crate::error::{Error, Result};
use crate::families::{Model, TabularMdp};

/// Absolute tolerance of the adaptive Simpson oracle.
pub const QUADRATURE_TOL: f64 = 1e-9;
/// Half-width, in standard deviations, of the integration window used for
/// untruncated Gaussians.
pub const GAUSSIAN_WINDOW: f64 = 8.0;

/// Rényi order `ζ ∈ (0, 1)`; `λ = 1 - ζ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub fn new(zeta: f64) -> Result<Self> {
        if zeta > 0.0 && zeta < 1.0 {
            Ok(Self(zeta))
        } else {
            Err(Error::domain(format!("Rényi order {zeta} outside (0, 1)")))
        }
    }

    pub fn from_lambda(lambda: f64) -> Result<Self> {
        Self::new(1.0 - lambda).map_err(|_| Error::domain(format!("λ = {lambda} outside (0, 1)")))
    }

    pub fn zeta(self) -> f64 {
        self.0
    }

    pub fn lambda(self) -> f64 {
        1.0 - self.0
    }
}

fn check_pair(f: &Instance, g: &Instance, d: Decision) -> Result<()> {
    if !f.is_compatible(g) {
        return Err(Error::domain("instances are not structurally compatible"));
    }
    if d.0 >= f.num_decisions() {
        return Err(Error::domain(format!("decision {} out of range", d.0)));
    }
    Ok(())
}

/// `D_KL(f[π] ‖ g[π])`.
pub fn kl(f: &Instance, g: &Instance, d: Decision) -> Result<f64> {
    check_pair(f, g, d)?;
    Ok(kl_unchecked(f.model(), g.model(), d.0))
}

/// `D_ζ(f[π] ‖ g[π])`.
pub fn renyi(f: &Instance, g: &Instance, d: Decision, order: RenyiOrder) -> Result<f64> {
    check_pair(f, g, d)?;
    Ok(renyi_unchecked(f.model(), g.model(), d.0, order.zeta()))
}

/// `Σ_π w_π D_KL(f[π] ‖ g[π])` with the convention `0 · ∞ = 0`.
pub fn weighted_kl(f: &Instance, g: &Instance, w: &[f64]) -> Result<f64> {
    if !f.is_compatible(g) {
        return Err(Error::domain("instances are not structurally compatible"));
    }
    if w.len() != f.num_decisions() {
        return Err(Error::domain(format!(
            "allocation has {} entries for {} decisions",
            w.len(),
            f.num_decisions()
        )));
    }
    if w.iter().any(|&x| x < 0.0 || x.is_nan()) {
        return Err(Error::domain("allocation must be non-negative"));
    }
    Ok(weighted_sum(w, &kl_row(f, g)))
}

pub(crate) fn weighted_sum(w: &[f64], kls: &[f64]) -> f64 {
    w.iter()
        .zip(kls)
        .filter(|(&wi, _)| wi > 0.0)
        .map(|(wi, k)| wi * k)
        .sum()
}

/// KL at every decision. Assumes compatibility.
pub(crate) fn kl_row(f: &Instance, g: &Instance) -> Vec<f64> {
    match (f.model(), g.model()) {
        (Model::TabularMdp(a), Model::TabularMdp(b)) => (0..a.num_policies())
            .map(|pi| tabular_kl(a, b, pi).0)
            .collect(),
        (a, b) => (0..f.num_decisions()).map(|d| kl_unchecked(a, b, d)).collect(),
    }
}

fn gaussian_kl(mf: f64, mg: f64) -> f64 {
    0.5 * (mf - mg) * (mf - mg)
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    }
    (term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0)
}

fn categorical_kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return f64::INFINITY;
        }
        total += a * (a / b).ln();
    }
    total.max(0.0)
}

/// `Σ_x p^ζ q^(1-ζ)` over a finite support.
fn categorical_affinity(p: &[f64], q: &[f64], zeta: f64) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .map(|(&a, &b)| a.powf(zeta) * b.powf(1.0 - zeta))
        .sum()
}

fn renyi_from_affinity(ln_affinity: f64, zeta: f64) -> f64 {
    if ln_affinity == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    (ln_affinity / (zeta - 1.0)).max(0.0)
}

pub(crate) fn kl_unchecked(f: &Model, g: &Model, d: usize) -> f64 {
    match (f, g) {
        (Model::GaussianMab(a), Model::GaussianMab(b)) => gaussian_kl(a.means[d], b.means[d]),
        (Model::LinearBandit(a), Model::LinearBandit(b)) => gaussian_kl(a.mean(d), b.mean(d)),
        (Model::BernoulliMab(a), Model::BernoulliMab(b)) => bernoulli_kl(a.probs[d], b.probs[d]),
        (Model::TabularMdp(a), Model::TabularMdp(b)) => tabular_kl(a, b, d).0,
        _ => f64::NAN,
    }
}

pub(crate) fn renyi_unchecked(f: &Model, g: &Model, d: usize, zeta: f64) -> f64 {
    match (f, g) {
        (Model::GaussianMab(a), Model::GaussianMab(b)) => zeta * gaussian_kl(a.means[d], b.means[d]),
        (Model::LinearBandit(a), Model::LinearBandit(b)) => zeta * gaussian_kl(a.mean(d), b.mean(d)),
        (Model::BernoulliMab(a), Model::BernoulliMab(b)) => {
            let (p, q) = (a.probs[d], b.probs[d]);
            let aff = categorical_affinity(&[p, 1.0 - p], &[q, 1.0 - q], zeta);
            renyi_from_affinity(aff.ln(), zeta)
        }
        (Model::TabularMdp(a), Model::TabularMdp(b)) => tabular_renyi(a, b, d, zeta),
        _ => f64::NAN,
    }
}

/// Chain rule: `Σ_h Σ_s d_h^f(s) [KL(r_f[s,a] ‖ r_g[s,a]) + KL(p_f[s,a] ‖ p_g[s,a])]`
/// with `a = π(s)` and `d^f` the state distribution of `f` under `π`.
/// Also returns the per-layer contributions.
pub(crate) fn tabular_kl(f: &TabularMdp, g: &TabularMdp, policy: usize) -> (f64, Vec<f64>) {
    let dist = f.state_distribution(policy);
    let h = f.horizon();
    let mut per_layer = vec![0.0; h];
    for (layer, masses) in dist.iter().enumerate() {
        for (local, &mass) in masses.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let s = f.global_state(layer, local);
            let a = f.policy_action(policy, s);
            let mut step = f.reward_dist(s, a).kl(g.reward_dist(s, a));
            if layer + 1 < h {
                step += categorical_kl(f.transition(s, a), g.transition(s, a));
            }
            per_layer[layer] += mass * step;
        }
    }
    (per_layer.iter().sum(), per_layer)
}

/// Exact Rényi divergence of the two trajectory laws under `policy`.
///
/// The integrand `f[π]^ζ g[π]^(1-ζ)` factorises over steps, so the total
/// affinity is a backward recursion over layers:
/// `V_H(s) = A_r(s)`, `V_h(s) = A_r(s) Σ_s' p_f(s'|s)^ζ p_g(s'|s)^(1-ζ) V_{h+1}(s')`.
fn tabular_renyi(f: &TabularMdp, g: &TabularMdp, policy: usize, zeta: f64) -> f64 {
    let h = f.horizon();
    let mut next: Vec<f64> = Vec::new();
    for layer in (0..h).rev() {
        let states = f.layer_states(layer);
        let mut cur = Vec::with_capacity(states.len());
        for s in states {
            let a = f.policy_action(policy, s);
            let mut ln_v = f.reward_dist(s, a).ln_affinity(g.reward_dist(s, a), zeta);
            if layer + 1 < h {
                let (pf, pg) = (f.transition(s, a), g.transition(s, a));
                let cont: f64 = pf
                    .iter()
                    .zip(pg)
                    .zip(&next)
                    .filter(|((&a, &b), _)| a > 0.0 && b > 0.0)
                    .map(|((&a, &b), &v)| a.powf(zeta) * b.powf(1.0 - zeta) * v)
                    .sum();
                ln_v += cont.ln();
            }
            cur.push(ln_v.exp());
        }
        next = cur;
    }
    renyi_from_affinity(next[0].ln(), zeta)
}

/// KL, Rényi values and (for trajectories) the per-layer KL split for one
/// decision.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub kl: f64,
    pub renyi: Vec<(f64, f64)>,
    pub per_step_kl: Vec<f64>,
}

pub fn divergence_report(
    f: &Instance,
    g: &Instance,
    d: Decision,
    orders: &[RenyiOrder],
) -> Result<DivergenceReport> {
    check_pair(f, g, d)?;
    let (kl, per_step_kl) = match (f.model(), g.model()) {
        (Model::TabularMdp(a), Model::TabularMdp(b)) => tabular_kl(a, b, d.0),
        (a, b) => {
            let v = kl_unchecked(a, b, d.0);
            (v, vec![v])
        }
    };
    let renyi = orders
        .iter()
        .map(|o| (o.zeta(), renyi_unchecked(f.model(), g.model(), d.0, o.zeta())))
        .collect();
    Ok(DivergenceReport {
        kl,
        renyi,
        per_step_kl,
    })
}

/// Observation support handed to the quadrature oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Interval { lo: f64, hi: f64 },
    Discrete(Vec<f64>),
}

/// Support of the scalar observation at `d`, covering both instances. For
/// Gaussian observations this is the ±8σ window around both means.
pub fn scalar_support(f: &Instance, g: &Instance, d: Decision) -> Result<Support> {
    check_pair(f, g, d)?;
    let mean_pair = |a: f64, b: f64| Support::Interval {
        lo: a.min(b) - GAUSSIAN_WINDOW,
        hi: a.max(b) + GAUSSIAN_WINDOW,
    };
    match (f.model(), g.model()) {
        (Model::GaussianMab(a), Model::GaussianMab(b)) => Ok(mean_pair(a.means[d.0], b.means[d.0])),
        (Model::LinearBandit(a), Model::LinearBandit(b)) => Ok(mean_pair(a.mean(d.0), b.mean(d.0))),
        (Model::BernoulliMab(_), _) => Ok(Support::Discrete(vec![0.0, 1.0])),
        _ => Err(Error::domain("trajectory observations have no scalar support")),
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn eval(f: &dyn Fn(f64) -> f64, x: f64) -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Numeric(format!("integrand is {y} at x = {x}")))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (eval(f, lm)?, eval(f, rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }

    if !(a < b) {
        return Err(Error::domain("quadrature interval must satisfy a < b"));
    }
    // Split up front so narrow peaks are not missed by the first estimate.
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        let (fa, fm, fb) = (eval(f, lo)?, eval(f, 0.5 * (lo + hi))?, eval(f, hi)?);
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += recurse(f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 48)?;
    }
    Ok(total)
}

fn interval(support: &Support) -> Result<(f64, f64)> {
    match support {
        Support::Interval { lo, hi } => Ok((*lo, *hi)),
        Support::Discrete(_) => Err(Error::domain(
            "quadrature oracle applies to continuous supports only",
        )),
    }
}

/// `(1/(ζ-1)) ln ∫ p^ζ q^(1-ζ)` by adaptive Simpson quadrature. `p` must be
/// a normalised density on `support`.
///
/// The integrand is `p · expm1((1-ζ) ln(q/p))`, i.e. the affinity minus one,
/// and the tolerance shrinks with `1-ζ`, so the `1/(ζ-1)` factor does not
/// amplify quadrature error near `ζ = 1`.
pub fn renyi_quadrature_oracle(
    ln_p: &dyn Fn(f64) -> f64,
    ln_q: &dyn Fn(f64) -> f64,
    support: &Support,
    order: RenyiOrder,
) -> Result<f64> {
    let (lo, hi) = interval(support)?;
    let z = order.zeta();
    let integrand = |x: f64| {
        let (a, b) = (ln_p(x), ln_q(x));
        if a == f64::NEG_INFINITY {
            0.0
        } else if b == f64::NEG_INFINITY {
            -a.exp()
        } else {
            a.exp() * ((1.0 - z) * (b - a)).exp_m1()
        }
    };
    let shifted = adaptive_simpson(&integrand, lo, hi, QUADRATURE_TOL * (1.0 - z).min(1.0))?;
    Ok(shifted.ln_1p() / (z - 1.0))
}

/// `∫ p ln(p/q)` by adaptive Simpson quadrature.
pub fn kl_quadrature_oracle(
    ln_p: &dyn Fn(f64) -> f64,
    ln_q: &dyn Fn(f64) -> f64,
    support: &Support,
) -> Result<f64> {
    let (lo, hi) = interval(support)?;
    let integrand = |x: f64| {
        let a = ln_p(x);
        if a == f64::NEG_INFINITY {
            0.0
        } else {
            a.exp() * (a - ln_q(x))
        }
    };
    adaptive_simpson(&integrand, lo, hi, QUADRATURE_TOL)
}
