//! Config-driven pipeline behind the `qctrl` binary: build an instance, solve
//! the relaxed stochastic problem, round it to a binary schedule, and score the
//! result out of sample. Every artifact carries the config hash and seed.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod verify;

pub use config::RunConfig;

use qctrl_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0} verification check(s) failed")]
    Verify(usize),
}

impl CliError {
    /// 2 for configuration and input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(
                CoreError::EigenFailure { .. } | CoreError::NonFinite { .. } | CoreError::NonHermitianExpectation { .. },
            ) => 3,
            Self::Verify(_) => 1,
            _ => 2,
        }
    }
}
