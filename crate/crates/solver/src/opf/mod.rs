//! AC optimal power flow and its convex relaxations.
//!
//! One interior-point core ([`crate::nlp`]) solves four formulations:
//! the full polar AC problem and the copper-plate, loss-aware network
//! flow, and second-order-cone relaxations. Objective ordering
//! CP <= NF+LL <= SOC <= AC holds wherever all four solve.

pub mod ac;
pub mod cp;
pub mod gap;
pub mod nfll;
pub mod soc;

pub use ac::{formulate_ac, formulate_ac_feasibility, AcObjective, AcOpf, AcSolution};
pub use cp::{formulate_cp, CopperPlate};
pub use gap::{
    gap, gap_report, gap_table, render_markdown, solve_ac, solve_relaxation, EntryStatus,
    GapError, GapOptions, GapReport, ModelKind, RelaxEntry,
};
pub use nfll::{formulate_nfll, NetworkFlow};
pub use soc::{formulate_soc, SocRelaxation};

use thiserror::Error;

/// Why a formulation cannot be built for a network.
#[derive(Debug, Error, PartialEq)]
pub enum FormulateError {
    #[error("no reference (slack) bus among active buses")]
    NoReference,
    #[error("network has no in-service generators")]
    NoGenerators,
    #[error("branch[{branch}] has negative series impedance; model not applicable")]
    NegativeImpedance { branch: usize },
}
