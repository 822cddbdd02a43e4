use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A probability, distribution parameter, or count outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested method cannot be applied to the supplied data layout.
    #[error("{0}")]
    MethodMismatch(String),

    #[error("degenerate assay: adjusted sensitivity {phi_p} does not exceed adjusted false-positive rate {phi_n}")]
    DegenerateAssay { phi_n: f64, phi_p: f64 },

    #[error("infeasible coefficient of variation {cv} for {strata} strata (requires cv^2 < strata - 1)")]
    InfeasibleCv { cv: f64, strata: usize },

    #[error("infeasible placement: stratum prevalence {theta} exceeds 1")]
    InfeasiblePlacement { theta: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors that describe a model that cannot be fitted rather
    /// than malformed input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::DegenerateAssay { .. } | Error::InfeasibleCv { .. } | Error::InfeasiblePlacement { .. }
        )
    }
}
