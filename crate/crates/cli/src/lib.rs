//! Experiment runner for the kdisc estimators: configuration, data
//! generators and one function per subcommand.

pub mod config;
pub mod error;
pub mod experiments;
pub mod generators;

pub use config::Config;
pub use error::{CliError, CliResult};
pub use experiments::{find, Report, EXPERIMENTS};
