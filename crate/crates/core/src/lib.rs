pub mod batch;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod online;
pub mod snapshots;
pub mod spectral;
pub mod sysid;
pub mod windowed;

pub use error::{DmdError, Result};
