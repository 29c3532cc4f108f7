use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage, used to tag diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Prep,
    Roi,
    Tac,
    Flow,
    Features,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Input => "input",
            Stage::Prep => "prep",
            Stage::Roi => "roi",
            Stage::Tac => "tac",
            Stage::Flow => "flow",
            Stage::Features => "features",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: pcatdyn_core::Error,
    },

    #[error("[output] {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("verification failed: {0}")]
    Verify(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output { path: path.into(), source }
    }

    /// 2 config, 3 data, 4 numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source: pcatdyn_core::Error::Degenerate(_), .. } => 4,
            _ => 3,
        }
    }
}

/// Attaches a stage tag to core results.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> CliResult<T>;
}

impl<T> AtStage<T> for pcatdyn_core::Result<T> {
    fn at(self, stage: Stage) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
