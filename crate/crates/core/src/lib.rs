//! Structured linear controlled differential equations for sequence modelling.
pub mod diagnostics;
pub mod error;
pub mod flows;
pub mod hadamard;
pub mod linalg;
pub mod logsig;
pub mod model;
pub mod structured;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
