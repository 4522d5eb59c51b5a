//! Elastic AC feasibility oracle.
//!
//! Solves the zero-cost AC problem with nonnegative elastic slacks on
//! every thermal and angle row, minimizing the total violation. A
//! converged solve with (near-)zero total slack certifies feasibility;
//! a converged positive optimum certifies local infeasibility. A solve
//! that does not converge is reported as such and treated conservatively
//! by callers.

use gridcase_core::Network;
use gridcase_solver::nlp::{solve_nlp, SolveOptions, SolveStatus};
use gridcase_solver::opf::{formulate_ac_feasibility, AcSolution, FormulateError};

/// Total normalized violation below which a point counts as feasible.
pub const FEASIBLE_SLACK_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum Feasibility {
    /// Certified feasible; carries the witnessing operating point.
    Feasible(Box<AcSolution>),
    /// Converged to a positive total violation.
    Infeasible { violation: f64 },
    /// The oracle itself did not converge.
    Unknown { status: SolveStatus },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Run the elastic feasibility solve on a network.
pub fn check_feasible(net: &Network, options: &SolveOptions) -> Result<Feasibility, FormulateError> {
    let problem = formulate_ac_feasibility(net)?;
    let out = solve_nlp(&problem, options);
    if out.status != SolveStatus::Optimal {
        return Ok(Feasibility::Unknown { status: out.status });
    }
    let sol = problem.solution(&out.x, net.buses.len(), net.generators.len());
    if sol.elastic_total <= FEASIBLE_SLACK_TOL {
        Ok(Feasibility::Feasible(Box::new(sol)))
    } else {
        Ok(Feasibility::Infeasible { violation: sol.elastic_total })
    }
}
