use rand::Rng;

use crate::decision::{Decision, Instance, Phase, Round, RunRecord};

/// UCB1 over decisions as arms, started fresh: each decision once, then
/// `argmax mean + R_max·sqrt(2 ln t / N)` with `t` counted from the first
/// UCB round. Ties go to the lowest index. Rounds are numbered from
/// `first_t`.
pub(crate) fn ucb_rounds<R: Rng + ?Sized>(
    env: &Instance,
    rounds: usize,
    first_t: usize,
    phase: Phase,
    rng: &mut R,
) -> Vec<Round> {
    let k = env.num_decisions();
    let r_max = env.r_max();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let mut out = Vec::with_capacity(rounds);
    for step in 0..rounds {
        let arm = if step < k {
            step
        } else {
            let ln_t = ((step + 1) as f64).ln();
            let mut best = 0;
            let mut best_index = f64::NEG_INFINITY;
            for i in 0..k {
                let n = counts[i] as f64;
                let index = sums[i] / n + r_max * (2.0 * ln_t / n).sqrt();
                if index > best_index {
                    best = i;
                    best_index = index;
                }
            }
            best
        };
        let d = Decision(arm);
        let observation = env.sample(d, rng);
        sums[arm] += observation.reward();
        counts[arm] += 1;
        out.push(Round {
            t: first_t + step,
            decision: d,
            observation,
            regret: env.gap(d),
            phase,
        });
    }
    out
}

/// Plain UCB1 for `rounds` rounds on `env`.
pub fn run_ucb<R: Rng + ?Sized>(env: &Instance, rounds: usize, rng: &mut R) -> RunRecord {
    let mut rec = RunRecord::empty();
    rec.rounds = ucb_rounds(env, rounds, 1, Phase::Fallback, rng);
    rec
}

/// Explore-then-commit: each decision `m` times in round-robin order, then the
/// empirically best decision (lowest index on ties) for the rest.
pub fn run_etc<R: Rng + ?Sized>(env: &Instance, n: usize, m: usize, rng: &mut R) -> RunRecord {
    let k = env.num_decisions();
    let mut rec = RunRecord::empty();
    let mut sums = vec![0.0; k];
    let explore = (m * k).min(n);
    for step in 0..explore {
        let d = Decision(step % k);
        let observation = env.sample(d, rng);
        sums[d.0] += observation.reward();
        rec.rounds.push(Round {
            t: step + 1,
            decision: d,
            observation,
            regret: env.gap(d),
            phase: Phase::Init,
        });
    }
    rec.init_end = explore;
    rec.ident_end = explore;
    if explore < n {
        let mut best = 0;
        for i in 1..k {
            if sums[i] > sums[best] {
                best = i;
            }
        }
        let d = Decision(best);
        rec.committed_decision = Some(d);
        rec.accepted = true;
        for t in explore + 1..=n {
            let observation = env.sample(d, rng);
            rec.rounds.push(Round {
                t,
                decision: d,
                observation,
                regret: env.gap(d),
                phase: Phase::Commit,
            });
        }
    }
    rec
}
