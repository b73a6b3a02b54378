pub mod analysis;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod nn;
pub mod plot;
pub mod recon;
pub mod registry;
pub mod signal;
pub mod stats;
pub mod transforms;

pub use error::{Error, Result};
