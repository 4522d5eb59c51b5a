//! Per-unit conversion helpers.
//!
//! Internally everything is per-unit; these functions are the one place
//! where MW/MVA values cross into the model.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("MVA base must be positive, got {0}")]
    NonPositiveBase(f64),
}

/// Convert an MW or MVA value to per-unit on the given base.
pub fn to_per_unit(value: f64, base_mva: f64) -> Result<f64, UnitError> {
    if base_mva > 0.0 {
        Ok(value / base_mva)
    } else {
        Err(UnitError::NonPositiveBase(base_mva))
    }
}

/// Convert a per-unit value back to MW or MVA.
pub fn from_per_unit(value: f64, base_mva: f64) -> Result<f64, UnitError> {
    if base_mva > 0.0 {
        Ok(value * base_mva)
    } else {
        Err(UnitError::NonPositiveBase(base_mva))
    }
}
