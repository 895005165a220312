//! Correlation functions of continuously monitored quantum systems.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod superops;
pub mod trajectories;

pub use error::{Error, Result};
