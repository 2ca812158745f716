//! Synthetic datasets: a periodic 2D Burgers solver and manufactured fields
//! whose left-hand side is computed exactly from a known right-hand side.

mod analytic;
mod burgers;
mod manufactured;

pub use analytic::{AnalyticPoint, AnalyticQuantity, AnalyticSource, FamilyParams, Mode, TrigField};
pub use burgers::{burgers2d_from, burgers2d_simulate, burgers_initial, BurgersConfig};
pub use manufactured::{manufactured_dataset, DerivativeMode, ManufacturedEquation, ManufacturedSpec, LHS};
