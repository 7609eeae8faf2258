use std::fmt;

use thiserror::Error;

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Solve,
    Train,
    Simulate,
    Tune,
    Persist,
    Compare,
}

impl Stage {
    /// Process exit status for failures in this stage; `2` stays with
    /// command-line usage errors.
    pub fn exit_code(self) -> u8 {
        match self {
            Stage::Config => 3,
            Stage::Data => 4,
            Stage::Solve => 5,
            Stage::Train => 6,
            Stage::Simulate => 7,
            Stage::Tune => 8,
            Stage::Persist => 9,
            Stage::Compare => 10,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Solve => "solve",
            Stage::Train => "train",
            Stage::Simulate => "simulate",
            Stage::Tune => "tune",
            Stage::Persist => "persist",
            Stage::Compare => "compare",
        })
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("[{stage}] {source}")]
    Core {
        stage: Stage,
        #[source]
        source: lqt_core::Error,
    },
    #[error("[{stage}] {message}")]
    Invalid { stage: Stage, message: String },
}

impl BenchError {
    pub fn stage(&self) -> Stage {
        match self {
            BenchError::Core { stage, .. } | BenchError::Invalid { stage, .. } => *stage,
        }
    }

    pub(crate) fn invalid(stage: Stage, message: impl Into<String>) -> Self {
        BenchError::Invalid {
            stage,
            message: message.into(),
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

/// Tags core errors (and anything convertible to them) with a stage.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T, E: Into<lqt_core::Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| BenchError::Core { stage, source: e.into() })
    }
}
