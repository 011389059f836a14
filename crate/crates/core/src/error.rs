use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("invalid case: {0}")]
    Semantic(String),

    #[error("invalid loading direction: {0}")]
    InvalidDirection(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular Jacobian (operating point at or beyond the nose)")]
    SingularJacobian,

    #[error("Newton did not converge in {iterations} iterations (max mismatch {max_mismatch:.3e} pu)")]
    NonConvergence { iterations: usize, max_mismatch: f64 },

    #[error("series has a zero leading coefficient")]
    ZeroLeadingCoefficient,

    #[error("Pade approximant is degenerate at every admissible order")]
    DegeneratePade,

    #[error("Pade approximant has a pole at the evaluation point")]
    PoleAtEvaluationPoint,

    #[error("zero-injection germ solution not found: {0}")]
    GermNotFound(String),

    #[error("embedding matrix is singular")]
    SingularEmbeddingMatrix,

    #[error("holomorphic error embedding diverged (mismatch {before:.3e} -> {after:.3e} pu)")]
    CorrectionDiverged { before: f64, after: f64 },

    #[error("step search found no admissible step")]
    ZeroStep,

    #[error("base case power flow is unsolvable: {0}")]
    BaseCaseUnsolvable(String),

    #[error("stage {stage} failed: {reason}")]
    StageFailure { stage: usize, reason: String },

    #[error("continuation stalled before the nose at lambda = {lambda}")]
    StallBeforeNose { lambda: f64 },

    #[error("lambda = {lambda} outside the traced range [0, {max}]")]
    OutOfRange { lambda: f64, max: f64 },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Syntax { .. }
                | Error::Semantic(_)
                | Error::InvalidDirection(_)
                | Error::InvalidConfig(_)
                | Error::OutOfRange { .. }
        )
    }
}
