//! Batch front-end for the `modkal` tool: configuration, WAV I/O and stage
//! orchestration.

pub mod config;
pub mod pipeline;
pub mod wav;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

pub use config::{parse_config, Derev, Method, Mode, RunConfig, CONFIG_ENV};
pub use pipeline::{config_hash, run_pipeline};
pub use wav::{read_wav, write_wav};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Help or version text requested.
    #[error("{0}")]
    Info(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<modkal_core::Error> for CliError {
    fn from(e: modkal_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parses `argv`, runs the pipeline and returns the process exit code.
/// `env_config` is the value of `MODKAL_CONFIG`, if any.
pub fn run_cli<I, S>(argv: I, env_config: Option<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let default_config = env_config.filter(|s| !s.is_empty()).map(PathBuf::from);
    let result = parse_config(argv, default_config.as_deref()).and_then(|cfg| run_pipeline(&cfg, stdout));
    match result {
        Ok(_) => 0,
        Err(CliError::Info(text)) => {
            let _ = write!(stdout, "{text}");
            0
        }
        Err(e) => {
            let kind = if e.exit_code() == 2 { "usage" } else { "error" };
            let _ = writeln!(stderr, "modkal: {kind}: {e}");
            e.exit_code()
        }
    }
}
