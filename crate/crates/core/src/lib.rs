//! Instance-optimal interactive decision making.
//!
//! The crate is organised bottom-up:
//!
//! * [`decision`] holds the shared vocabulary: decisions, observations,
//!   instances, hypothesis families and run records.
//! * [`families`] builds concrete instances (Gaussian and Bernoulli
//!   multi-armed bandits, linear bandits, layered tabular MDPs with
//!   truncated-Gaussian rewards) and finite grid families.
//! * [`divergence`] computes KL and Rényi divergences between instances,
//!   with quadrature oracles for the closed forms.
//! * [`complexity`] solves the allocation program `C(f, n)` by constraint
//!   generation over a finite family.
//! * [`t2c`] implements Test-to-Commit together with the stand-alone
//!   log-likelihood ratio test and its UCB fallback.
//! * [`harness`] runs seeded Monte-Carlo experiments and writes CSV output;
//!   the `iodm` binary is a thin wrapper around [`harness::cli`].

// `!(x > 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complexity;
pub mod decision;
pub mod divergence;
pub mod error;
pub mod families;
pub mod harness;
pub mod math;
pub mod t2c;

pub use decision::{Decision, HypothesisFamily, Instance, Observation, Round, RunRecord, Step};
pub use error::{Error, Result};
pub use families::FamilyKind;
