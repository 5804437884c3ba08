//! Feedback particle filter for point-process observations.

pub mod dynamics;
pub mod error;
pub mod filters;
pub mod gain;
pub mod harness;
pub mod manifold;
pub mod oracle;

pub use error::{Error, Result};
