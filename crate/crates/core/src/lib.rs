//! Per-unit transmission network model and MATPOWER case file I/O.
//!
//! The [`Network`] type is the unit of parsing, augmentation, and solving:
//! an immutable value in per-unit on its own MVA base. The [`matpower`]
//! module reads and writes the MATLAB-function case format with lossless
//! round-tripping.

pub mod matpower;
pub mod model;
pub mod units;

pub use model::{
    validate, Branch, Bus, BusId, BusKind, CostPoly, FuelCategory, Generator, Network, Violation,
};
pub use units::{from_per_unit, to_per_unit, UnitError};
