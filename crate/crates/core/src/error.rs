use thiserror::Error;

/// Errors produced across estimation, regression, simulation and I/O.
#[derive(Debug, Error)]
pub enum VcompError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown subject id `{0}`")]
    UnknownSubject(String),

    #[error("duplicate twin assignment for subject `{0}`")]
    DuplicateTwin(String),

    #[error("unsupported relation class `{0}`")]
    UnsupportedRelation(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("covariate matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("trait `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("kernel Gram matrix is singular (condition number {condition:e}); collinear kernels: {labels}")]
    SingularGram { condition: f64, labels: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("no admissible bandwidth: every candidate gave a singular local design")]
    NoAdmissibleBandwidth,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VcompError>;
