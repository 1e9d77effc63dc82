pub mod analysis;
pub mod error;
pub mod forecast;
pub mod influence;
pub mod io;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod styles;
pub mod synth;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use types::*;
