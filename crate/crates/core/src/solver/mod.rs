//! Exact solution of the rendezvous MILP.
//!
//! [`solve_milp`] runs best-first branch-and-bound over the binary `k`
//! columns on top of the simplex in [`lp`]; [`brute_force`] enumerates every
//! allocation matrix of small instances and is kept as an independent oracle.

mod bnb;
mod enumerate;
pub mod lp;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bnb::{solve_milp, DEFAULT_NODE_LIMIT, INTEGRALITY_TOL};
pub use enumerate::{brute_force, feasible_allocations, ENUMERATION_BUDGET};
pub use lp::{solve_lp, LpProblem, LpRow, LpSolution, LpStatus};

use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("instance-too-large: 2^{cells} allocation matrices exceed the enumeration budget of {budget}")]
    InstanceTooLarge { cells: usize, budget: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

/// Outcome of a MILP solve. `wall_time` is informational and left out of the
/// JSON form so that reports of identical runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub solution: Option<crate::model::MilpSolution>,
    pub objective: Option<f64>,
    /// LP relaxations solved.
    pub nodes: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}
