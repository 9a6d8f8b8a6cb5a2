pub mod alphabet;
pub mod cssr;
pub mod encode;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod metrics;
pub mod seed;
pub mod synth;

pub use alphabet::Alphabet;
pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
