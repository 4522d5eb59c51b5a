//! Derived test-case generation: congested (API) and angle-constrained
//! (SAD) variants of a base case.
//!
//! Both generators bisect over a scalar stress parameter with an
//! elastic AC feasibility oracle: a zero-objective interior-point solve
//! that minimizes total constraint violation, so feasibility is
//! certified by a (near-)zero optimum rather than inferred from solver
//! convergence alone.

pub mod api;
pub mod oracle;
pub mod sad;

pub use api::{gen_api, ApiLog};
pub use oracle::{check_feasible, Feasibility};
pub use sad::{gen_sad, SadLog};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("no branch has a finite thermal limit; demand increase is unbounded")]
    NoFiniteLimits,
    #[error("case is infeasible at the base demand")]
    InfeasibleBase,
    #[error("case is infeasible even at the widest angle bound ({0} deg)")]
    InfeasibleAtWidestAngle(f64),
    #[error("feasibility oracle failed: {0}")]
    Oracle(String),
    #[error(transparent)]
    Formulate(#[from] gridcase_solver::opf::FormulateError),
    #[error(transparent)]
    Augment(#[from] gridcase_stats::AugmentError),
}
