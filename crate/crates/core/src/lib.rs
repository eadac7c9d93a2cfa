pub mod analytics;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod quantum;
pub mod sme;

pub use error::{Error, Result};
