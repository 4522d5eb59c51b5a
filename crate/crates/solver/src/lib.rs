//! AC power flow, a primal-dual interior-point NLP core, and the
//! AC-OPF model ladder (full problem plus its copper-plate, loss-aware
//! network-flow, and second-order-cone relaxations) with optimality-gap
//! reporting.

pub mod linalg;
pub mod nlp;
pub mod opf;
pub mod pf;
pub mod ybus;

pub use nlp::{solve_nlp, NlpProblem, SolveOptions, SolveOutcome, SolveStatus};
pub use pf::{branch_flows, check_operational, solve_pf, BranchFlow, PfError, PowerFlowSolution};
