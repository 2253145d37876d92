//! Invariant checks over a configured family, used by `iodm validate`.

use std::fmt;

use crate::complexity::{mab_closed_form_weights, separation_oracle, ComplexityProblem};
use crate::decision::Decision;
use crate::divergence::{kl, renyi, RenyiOrder};
use crate::error::Result;
use crate::families::FamilyKind;

use super::config::ExperimentConfig;

/// Pairs examined by the divergence checks.
const MAX_PAIRS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Builds the family and checks divergence identities, Rényi order
/// monotonicity, solver feasibility at cap `n`, and (Gaussian MAB) the
/// closed-form allocation. Construction errors propagate.
pub fn validate_config(config: &ExperimentConfig) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let (family, dropped) = config.build_family()?;
    report.push("family", true, format!("{} members, {dropped} tied lattice points dropped", family.len()));
    let truth = config.truth_index(&family)?;
    report.push("truth", true, format!("index {truth}"));

    let members = family.instances();
    let stride = (members.len() / MAX_PAIRS).max(1);
    let orders: Vec<RenyiOrder> = [0.5, 0.9, 0.99]
        .iter()
        .map(|&z| RenyiOrder::new(z))
        .collect::<Result<_>>()?;
    let mut identity_bad = 0;
    let mut order_bad = 0;
    let mut checked = 0;
    for i in (0..members.len()).step_by(stride) {
        let f = &members[i];
        let g = &members[(i + 1) % members.len()];
        for d in 0..family.num_decisions() {
            let d = Decision(d);
            if kl(f, f, d)? != 0.0 || renyi(f, f, d, orders[0])?.abs() > 1e-12 {
                identity_bad += 1;
            }
            let k = kl(f, g, d)?;
            let mut prev = 0.0;
            for &o in &orders {
                let r = renyi(f, g, d, o)?;
                if r < prev - 1e-12 || r > k + 1e-9 * k.max(1.0) {
                    order_bad += 1;
                }
                prev = r;
            }
            checked += 1;
        }
    }
    report.push("kl-identity", identity_bad == 0, format!("{identity_bad} failures over {checked} decisions"));
    report.push("renyi-order", order_bad == 0, format!("{order_bad} failures over {checked} pairs"));

    let f = family.instance(truth);
    let problem = ComplexityProblem::new(f, &family)?;
    let cap = config.n as f64;
    let sol = problem.solve(cap)?;
    match sol.allocation() {
        Some(a) => {
            let sep = separation_oracle(f, &family, &a.weights)?;
            report.push(
                "solver-feasibility",
                sep.is_none(),
                format!("C(f, {cap}) = {}, violation {:?}", a.objective, sep.map(|s| s.1)),
            );
        }
        None => report.push("solver-feasibility", true, format!("infeasible at cap {cap}")),
    }

    if family.kind() == FamilyKind::GaussianMab {
        match mab_closed_form_weights(f.gaps(), cap) {
            Ok(w) => {
                let sep = separation_oracle(f, &family, &w)?;
                let ok = sep.is_none() && sol.value() <= w.iter().zip(f.gaps()).map(|(w, g)| w * g).sum::<f64>() + 1e-9;
                report.push("closed-form", ok, format!("violation {:?}", sep.map(|s| s.1)));
            }
            Err(e) => report.push("closed-form", true, format!("skipped: {e}")),
        }
    }
    Ok(report)
}
