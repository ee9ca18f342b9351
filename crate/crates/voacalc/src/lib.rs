pub mod analytic;
pub mod category;
pub mod cli;
pub mod correlate;
pub mod error;
pub mod graded;
pub mod linalg;
pub mod models;
pub mod multivalued;
pub mod scalar;
pub mod suite;

pub use error::{Error, Result};
pub use scalar::{Cyc8, Scalar, Q};
pub mod report;
pub mod transforms;
pub mod voa;
