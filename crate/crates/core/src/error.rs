//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // numerics
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("cannot draw {k} orthonormal directions in {dim} dimensions")]
    KTooLarge { k: usize, dim: usize },
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("shape mismatch: data length {len} does not equal {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },

    // dataio
    #[error("{path}: bad magic bytes (expected EMB1)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported format version {version}")]
    VersionUnsupported { path: PathBuf, version: u32 },
    #[error("{path}: file truncated")]
    TruncatedFile { path: PathBuf },
    #[error("index has {index} keys but matrix has {rows} rows")]
    IndexMismatch { index: usize, rows: usize },
    #[error("duplicate word key {0}")]
    DuplicateKey(String),
    #[error("{path}: schema error: {message}")]
    SchemaError { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    ParseError {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("no rows left after aligning embeddings with targets for participant {participant}, feature {feature}")]
    EmptyIntersection {
        participant: String,
        feature: String,
    },
    #[error("unknown feature '{0}'")]
    FeatureUnknown(String),
    #[error("invalid target table: {0}")]
    InvalidTargets(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // pca
    #[error("requested {d} components but at most {max} are available")]
    DTooLarge { d: usize, max: usize },
    #[error("data has zero total variance")]
    DegenerateData,

    // probes / evaluation
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("alpha grid invalid: {0}")]
    InvalidGrid(String),
    #[error("validation correlation undefined for every alpha in the grid")]
    DegenerateValidation,
    #[error("need at least {k} sentences for {k} folds, got {got}")]
    TooFewSentences { k: usize, got: usize },
    #[error("fold {fold} has no {side} rows for {participant}")]
    FoldEmpty {
        fold: usize,
        side: &'static str,
        participant: String,
    },
    #[error("sentence {0} missing from fold plan")]
    SentenceNotInPlan(String),

    // stats
    #[error("zero variance in paired differences")]
    ZeroVariance,
    #[error("constant input to rank correlation")]
    ConstantInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero vector in cosine similarity")]
    ZeroVector,
    #[error("invalid statistic argument: {0}")]
    InvalidArgument(String),

    // analyses
    #[error("no probe for participant {0}")]
    MissingProbe(String),
    #[error("confound design is rank deficient; no usable columns")]
    RankDeficientConfounds,
    #[error("corpus '{0}' not present in inputs")]
    CorpusMissing(String),
    #[error("no embedding file for layer {layer} ({path})")]
    MissingLayerFile { layer: u32, path: PathBuf },

    // synth / config
    #[error("invalid synthetic config: {0}")]
    ConfigInvalid(String),
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("report serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid configuration or malformed input
    /// files, as opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ConfigError(_)
                | Error::ConfigInvalid(_)
                | Error::FeatureUnknown(_)
                | Error::MissingLayerFile { .. }
                | Error::CorpusMissing(_)
                | Error::InvalidGrid(_)
                | Error::BadMagic { .. }
                | Error::VersionUnsupported { .. }
                | Error::TruncatedFile { .. }
                | Error::IndexMismatch { .. }
                | Error::DuplicateKey(_)
                | Error::SchemaError { .. }
                | Error::ParseError { .. }
                | Error::InvalidTargets(_)
        )
    }
}
