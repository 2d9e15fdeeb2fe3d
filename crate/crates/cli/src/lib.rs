//! Library half of the `acbench` CLI: configuration, command execution, and
//! SVG rendering, kept separate from argument parsing so integration tests
//! can drive everything in-process.

pub mod commands;
pub mod config;
pub mod svg;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    /// Exit codes: 1 for configuration problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Installs the rayon pool honoring ACBENCH_JOBS; silently keeps the default
/// pool when the variable is unset or already installed.
pub fn configure_parallelism() {
    if let Ok(jobs) = std::env::var("ACBENCH_JOBS") {
        if let Ok(n) = jobs.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
