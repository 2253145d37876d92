use std::fmt;

use super::experiment::AggregateResult;
use super::fmt_f64;
use crate::complexity::Allocation;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointComparison {
    pub t: usize,
    pub regret: f64,
    pub ci_half_width: f64,
    /// `Reg(t) / ln t`.
    pub regret_per_log: f64,
    /// `C · ln t`.
    pub reference: f64,
    /// `(Reg(t) / ln t) / C`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub complexity: f64,
    pub rows: Vec<CheckpointComparison>,
    /// `Reg(t)/ln t` does not increase, beyond the CI noise, over the last
    /// half of the checkpoints.
    pub trend_non_increasing: bool,
}

/// Checkpoint-by-checkpoint comparison of empirical regret with `C · ln t`,
/// where `C` is the allocation's objective.
pub fn compare_to_complexity(result: &AggregateResult, allocation: &Allocation) -> ComparisonReport {
    let c = allocation.objective;
    let rows: Vec<CheckpointComparison> = result
        .checkpoints
        .iter()
        .zip(&result.mean_regret)
        .zip(&result.ci_half_width)
        .map(|((&t, &regret), &ci)| {
            let ln_t = (t as f64).ln();
            let per_log = regret / ln_t;
            let ratio = if regret == 0.0 { 0.0 } else { per_log / c };
            CheckpointComparison {
                t,
                regret,
                ci_half_width: ci,
                regret_per_log: per_log,
                reference: c * ln_t,
                ratio,
            }
        })
        .collect();
    let tail = &rows[rows.len() / 2..];
    let trend_non_increasing = tail.windows(2).all(|w| {
        let noise = w[0].ci_half_width / (w[0].t as f64).ln() + w[1].ci_half_width / (w[1].t as f64).ln();
        w[1].regret_per_log <= w[0].regret_per_log + noise
    });
    ComparisonReport {
        complexity: c,
        rows,
        trend_non_increasing,
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "complexity={}", fmt_f64(self.complexity))?;
        for r in &self.rows {
            writeln!(
                f,
                "t={} regret={} ci95={} regret_per_log={} reference={} ratio={}",
                r.t,
                fmt_f64(r.regret),
                fmt_f64(r.ci_half_width),
                fmt_f64(r.regret_per_log),
                fmt_f64(r.reference),
                fmt_f64(r.ratio)
            )?;
        }
        writeln!(f, "trend_non_increasing={}", self.trend_non_increasing)
    }
}
