//! Library side of the `ouve` command: configuration handling and one
//! function per subcommand, so the pipeline can be driven from tests.

pub mod commands;
pub mod config;

pub use config::RunConfig;
