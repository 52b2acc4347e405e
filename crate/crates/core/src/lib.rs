pub mod cohort;
pub mod cohortio;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod survcore;

pub use error::{Error, ErrorKind, Result};

/// Crate version recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
