//! Thermomechanical shape-memory alloy bar with voids: phase-field model with
//! entropy balance, Yosida-regularized phase constraint and penalized mass
//! balance.

pub mod checks;
pub mod cli_io;
pub mod constitutive;
pub mod convex_analysis;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod solver;

pub use error::{Error, FieldError, Result};
