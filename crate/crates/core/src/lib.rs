//! Deployment-efficient reinforcement learning in linear MDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: finite linear MDPs, policies, sampling and exact DP oracles.
//! * [`hard`]: the lower-bound instance family and the stationary expansion.
//! * [`lsvi`]: covariance accumulators, ridge regression and LSVI backups.
//! * [`det`]: deterministic-policy deployment (reward-aware and reward-free).
//! * [`arb`]: arbitrary-policy deployment with policy covers.
//! * [`lemma`]: numeric checks of the supporting matrix inequalities.
//! * [`harness`]: JSON-configured experiments and reports.

// NaN-rejecting checks are written as `!(x >= lo)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod arb;
pub mod det;
pub mod error;
pub mod hard;
pub mod harness;
pub mod linalg;
pub mod lemma;
pub mod lsvi;
pub mod mdp;
pub mod rng;

pub use error::{DerlError, Result};
