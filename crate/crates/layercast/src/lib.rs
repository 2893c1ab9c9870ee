//! Command-line front end for `layercast-core`: fading descriptors, run
//! configs, CSV/JSON output, and parallel sweeps.

pub mod config;
pub mod descriptor;
pub mod error;
pub mod output;
pub mod parallel;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, ErrorKind};
pub use run::run;
