pub mod analysis;
pub mod cli;
pub mod coeffsys;
pub mod continuation;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod multijet;
pub mod problem;
pub mod resolution;
pub mod schemes;
pub mod suites;

pub use error::KconeError;
