use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate covariate: dimension {dimension} ({name}) has zero variance")]
    DegenerateCovariate { dimension: usize, name: String },

    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("optimization failed after {iterations} iterations: {message}")]
    OptimizationFailure {
        message: String,
        iterations: usize,
        best: Vec<f64>,
    },

    #[error("division hazard: target at index {index} is zero")]
    DivisionHazard { index: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("inconsistent replication at time {time}: covariates vary within the group")]
    InconsistentReplication { time: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("transform domain error at time {time}: value {value} is outside the domain of {transform}")]
    TransformDomain {
        time: String,
        value: f64,
        transform: String,
    },

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the command-line front end:
    /// 1 usage/configuration, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::InvalidInput(_)
            | Error::Configuration(_)
            | Error::InvalidSplit(_)
            | Error::Json(_) => 1,
            Error::EmptyData(_)
            | Error::InsufficientData { .. }
            | Error::DegenerateCovariate { .. }
            | Error::InconsistentReplication { .. }
            | Error::Parse { .. }
            | Error::TransformDomain { .. }
            | Error::EmptyResult(_)
            | Error::Io(_)
            | Error::Csv(_) => 2,
            Error::UnsupportedQuery(_)
            | Error::SingularDesign(_)
            | Error::OptimizationFailure { .. }
            | Error::DivisionHazard { .. } => 3,
        }
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "probability level {tau} must lie in (0, 1)"
        )))
    }
}
