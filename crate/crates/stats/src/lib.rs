//! Statistical models for completing legacy power-flow cases.
//!
//! [`fleet`] ingests generator-fleet and fuel-price CSV data and fits
//! the capacity, cost, and thermal-limit models; [`augment`] applies the
//! fitted models to a [`gridcase_core::Network`] with seeded,
//! reproducible sampling.

pub mod augment;
pub mod fleet;
pub mod rng;

pub use augment::{apply_plan, AugmentError, AugmentLog, AugmentPlan, ReactiveModel};
pub use fleet::{
    convert_price, filter_fleet, fit_bins, fit_exponential, fit_loglog, fit_normal, map_fuel,
    AugmentModels, CapacityBins, FitError, FleetRecord, PriceRecord, MMBTU_PER_MWH,
};
