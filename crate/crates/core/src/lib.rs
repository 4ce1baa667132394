pub mod certificates;
pub mod config;
pub mod doubling;
pub mod error;
pub mod kernel;
pub mod metric;
pub mod profile;
pub mod quadrature;
pub mod report;
pub mod verify;

pub use error::{LabError, Result};
