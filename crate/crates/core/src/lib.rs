//! Car-following model calibration toolkit: trajectory cleaning, platoon
//! simulation, microscopic and macroscopic measures, closed-form error
//! propagation and MiC/MaC/BiC calibration.

pub mod calibration;
pub mod error;
pub mod error_propagation;
pub mod measures;
pub mod models;
pub mod simulation;
pub mod trajectory;

pub use error::{Error, Result};
