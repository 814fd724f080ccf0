pub mod bump;
pub mod corrector;
pub mod ensemble;
pub mod error;
pub mod events;
pub mod harness;
pub mod numeric;
pub mod rng;
pub mod secular;
pub mod spectra;
pub mod stats;
pub mod structure;

pub use error::{LabError, Result};
