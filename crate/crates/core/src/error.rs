use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // --- triangle ingestion -------------------------------------------------
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate cell for accident year {accident_year}, lag {dev_lag}")]
    DuplicateCell { accident_year: i32, dev_lag: u32 },
    #[error("triangle has no cells")]
    EmptyTriangle,
    #[error("triangle is not run-off shaped: {0}")]
    IrregularShape(String),
    #[error("training split has zero maximum incurred; cannot normalize")]
    DegenerateScale,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("zero denominator estimating factor for lag {lag}")]
    ZeroDenominator { lag: u32 },

    // --- regimes / env / risk -----------------------------------------------
    #[error("unknown regime level {0}")]
    UnknownLevel(u8),
    #[error("interpolation progress {0} outside [0, 1]")]
    InvalidProgress(f64),
    #[error("environment config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("adjustment {0} is not on the action grid")]
    ActionOutOfGrid(f64),
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("shortfall buffer is empty")]
    EmptyBuffer,
    #[error("confidence level {0} outside (0, 1)")]
    InvalidAlpha(f64),

    // --- agent --------------------------------------------------------------
    #[error("non-finite activation in network forward pass")]
    NonFiniteActivation,
    #[error("non-finite gradient during update")]
    NonFiniteGradient,
    #[error("update batch is empty")]
    EmptyBatch,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    // --- baselines ----------------------------------------------------------
    #[error("accident year {0} has no positive earned premium")]
    MissingPremium(i32),
    #[error("degenerate residuals: {0}")]
    DegenerateResiduals(String),

    // --- evaluation ---------------------------------------------------------
    #[error("no steps with incurred above the ratio guard")]
    NoEligibleSteps,
    #[error("need at least {needed} shortfall samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("refusing to write an empty report")]
    EmptyReport,

    // --- configuration and io -----------------------------------------------
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("missing artifact {0}; run the upstream command first")]
    MissingArtifact(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    WithContext {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::WithContext { context: context.into(), source: Box::new(self) }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            WithContext { source, .. } => source.exit_code(),
            Config(_) | Usage(_) | UnknownLevel(_) | InvalidProgress(_) | ConfigMismatch(_)
            | InvalidAlpha(_) | ActionOutOfGrid(_) | EpisodeFinished => 1,
            NonFiniteActivation | NonFiniteGradient | DegenerateResiduals(_) => 3,
            _ => 2,
        }
    }
}
