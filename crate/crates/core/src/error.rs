use thiserror::Error;

/// Errors raised anywhere in the explanation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CfxError {
    #[error("constant classifier: a tree consisting of a single leaf has no decision polynomial")]
    ConstantClassifier,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown category `{category}` for feature `{feature}`")]
    UnknownCategory { feature: String, category: String },
    #[error("invalid feature declaration: {0}")]
    BadFeature(String),
    #[error("bad probability distribution: {0}")]
    BadDistribution(String),
    #[error("enumeration cap exceeded: {size} > {cap}")]
    EnumerationCapExceeded { size: u128, cap: u128 },
    #[error("invalid instance: {0}")]
    BadInstance(String),
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("assignment is not consistent with the threshold and one-hot structure")]
    InconsistentAssignment,
    #[error("empty decision polynomial can never evaluate to 1")]
    EmptyPolynomialUnsatisfiable,
    #[error("missing weight for registry entry {0}")]
    MissingWeight(usize),
    #[error("malformed condition: {0}")]
    BadCondition(String),
    #[error("infeasible condition: {0}")]
    InfeasibleCondition(String),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("search cap exceeded ({0})")]
    CapExceeded(String),
    #[error("factual instance is already classified as the requested target class {0}")]
    AlreadyTargetClass(u8),
    #[error("missing dataset column `{0}`")]
    MissingColumn(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = CfxError> = std::result::Result<T, E>;
