use thiserror::Error;

/// Errors shared by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally inconsistent inputs: dimensions, grids, configuration.
    #[error("validation error: {0}")]
    Validation(String),

    /// A sampled point violates one of the coefficient hypotheses.
    #[error("hypothesis {inequality} violated at {witness}: lhs = {lhs} > bound = {rhs}")]
    HypothesisViolation {
        inequality: String,
        witness: String,
        lhs: f64,
        rhs: f64,
    },

    /// The time stepper produced a non-finite value or exceeded the guard.
    #[error("solution blew up at step {step} (sup |u(t,.)|_2 = {sup_l2})")]
    BlowUp { step: usize, sup_l2: f64 },

    /// Direct rate evaluation divides the residual by sigma.
    #[error("sigma_min = {sigma_min} <= 0: direct rate evaluation needs sigma bounded below")]
    DegenerateSigma { sigma_min: f64 },

    /// Too many Monte Carlo samples were excluded for blow-up.
    #[error("{excluded} of {total} samples blew up, above the {max_fraction} exclusion cap")]
    ExcessiveExclusions {
        excluded: usize,
        total: usize,
        max_fraction: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A stored control / sheet / trajectory file does not parse.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
