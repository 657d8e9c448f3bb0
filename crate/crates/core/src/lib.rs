//! Dependency-guided explanation annotation, attribution-prior training and
//! rationale evaluation for intent classification.

pub mod annotator;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod lime;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
