//! Heisenberg-picture simulation of continuous-variable state transfer with
//! partially disembodied transport, with a shot-level Monte-Carlo oracle.

pub mod check;
pub mod cli;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod mc;
pub mod metrics;
pub mod optics;
pub mod protocol;
pub mod report;

pub use error::{Error, Result};
