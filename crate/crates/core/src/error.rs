use thiserror::Error;

/// Errors returned by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("weight {index} is negative or not finite ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("all weights are zero")]
    AllZero,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("alpha must lie in (0,1), got {0}")]
    BadAlpha(f64),
    #[error("sigma must lie in (0,1), got {0}")]
    BadSigma(f64),
    #[error("eps must lie in (0,1), got {0}")]
    BadEps(f64),
    #[error("category {0} has zero null probability but a positive count")]
    ZeroNullCell(usize),
    #[error("no solution in (0,1]; clamped value {value}")]
    NoSolutionInUnitInterval { value: f64 },
    #[error("numerical integration failed: {0}")]
    IntegrationFailure(String),
    #[error("support search exceeded its half-width cap")]
    UnboundedSearch,
    #[error("partition exceeded the maximum depth of {0}")]
    MaxDepthExceeded(usize),
    #[error("partition needs more than {budget} cells")]
    CellBudgetExceeded { budget: usize },
    #[error("partition has no cells")]
    EmptyPartition,
    #[error("bad density parameters: {0}")]
    BadParams(String),
    #[error("sigma {sigma} outside the validity range {range}")]
    OutOfValidityRange { sigma: f64, range: String },
    #[error("eps {eps} cannot be realized while keeping the vector nonnegative (max {max})")]
    InfeasibleEps { eps: f64, max: f64 },
    #[error("requested separation {requested} exceeds the achievable {achievable}")]
    SeparationShortfall { requested: f64, achievable: f64 },
    #[error("naive binning needs {0} bins, above the cap")]
    TooManyBins(f64),
    #[error("density has no closed-form CDF")]
    NoCdf,
    #[error("unknown test id '{0}'")]
    UnknownTest(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
