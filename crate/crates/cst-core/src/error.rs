//! Error type shared by all toolkit modules.

use thiserror::Error;

/// Errors surfaced by model construction, sampling, abduction, and audits.
#[derive(Debug, Error)]
pub enum CstError {
    /// The SCM failed structural validation.
    #[error("invalid SCM: {0}")]
    InvalidScm(String),

    /// A referenced column is missing from the dataset.
    #[error("missing column '{0}'")]
    MissingColumn(String),

    /// Column lengths (or dataset alignments) disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A noise specification carries out-of-range parameters.
    #[error("invalid noise parameters for node '{node}': {reason}")]
    InvalidNoise { node: String, reason: String },

    /// Log-link abduction hit a non-positive observed value.
    #[error("non-positive value {value} for exp-link node '{node}' at record {record}")]
    NonPositiveExpTarget {
        node: String,
        record: usize,
        value: f64,
    },

    /// Latent values required by the operation were not supplied.
    #[error("missing latents for node '{0}'")]
    MissingLatents(String),

    /// An intervention targeted a node that is not a protected root.
    #[error("intervention target '{0}' is not a protected root node")]
    InvalidInterventionTarget(String),

    /// An intervention carried no assignments.
    #[error("intervention is empty")]
    EmptyIntervention,

    /// The least-squares design matrix is rank deficient.
    #[error("rank-deficient design matrix while fitting node '{0}'")]
    RankDeficient(String),

    /// A search space side came out empty.
    #[error("empty {side} search space for protected spec {spec}")]
    EmptySearchSpace { side: &'static str, spec: String },

    /// Two values on a constant attribute cannot be compared.
    #[error("degenerate range on attribute '{0}' with unequal values")]
    DegenerateRange(String),

    /// The attribute schema is inconsistent with itself or the data.
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    /// Audit configuration out of range.
    #[error("invalid audit config: {0}")]
    InvalidConfig(String),

    /// A classifier was asked to decide on columns it does not consume.
    #[error("classifier input error: {0}")]
    ClassifierInput(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, CstError>;
