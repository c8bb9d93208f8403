use thiserror::Error;

/// Errors raised by the distribution primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("every weight is zero; the conditioning event is impossible")]
    AllZeroWeights,
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("support mismatch: p puts mass {p} on a value where q has none")]
    SupportMismatch { p: f64 },
    #[error("beta parameters must be positive and finite (alpha = {alpha}, beta = {beta})")]
    InvalidBeta { alpha: f64, beta: f64 },
}

/// Errors raised while building models or evaluating designs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OedError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("a model space needs at least two models, got {0}")]
    TooFewModels(usize),
    #[error("duplicate model name `{0}`")]
    DuplicateModel(String),
    #[error("prior has {got} weights for {expected} models")]
    PriorLength { expected: usize, got: usize },
    #[error("every model assigns probability zero to the observed response")]
    AllZeroLikelihood,
    #[error("response space is empty")]
    EmptyResponseSpace,
    #[error("model `{model}` puts mass on a response outside the declared response space")]
    ResponseOutsideSpace { model: String },
    #[error("model `{model}` does not have a binary response domain")]
    NonBinaryResponse { model: String },
    #[error("model `{model}` declares non-independent item responses")]
    NonFactorizableResponse { model: String },
    #[error("per-item probability lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("factorized path supports exactly two models, got {0}")]
    UnsupportedModelCount(usize),
    #[error("group size must be at least 1")]
    ZeroGroupSize,
    #[error("summed similarity to both categories is zero")]
    DegenerateEvidence,
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("marginalized parameters are only defined for single-participant responses, got n = {0}")]
    MixtureGroup(u32),
    #[error("response has {got} items, expected {expected}")]
    ResponseLength { expected: usize, got: usize },
    #[error("count {count} exceeds group size {n}")]
    CountExceedsGroup { count: u32, n: u32 },
    #[error("no experiments to rank")]
    NoExperiments,
}
