use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// An argument violated the domain of the operation.
    #[error("domain error: {what} (got {value}, bound {bound})")]
    Domain { what: &'static str, value: f64, bound: f64 },

    /// The point does not lie in the model domain, i.e. Im w <= f(|z|).
    #[error("point outside the domain: height {v} <= f(|z|) = {floor}")]
    OutsideDomain { v: f64, floor: f64 },

    #[error("quadrature failed to converge for {context}: value {value:e}, error {error:e}")]
    Quadrature { context: String, value: f64, error: f64 },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("no doubling certificate up to sigma = {sigma_max}")]
    NotDoubling { sigma_max: f64 },

    /// The height is past the admissibility threshold r(alpha, N).
    #[error("height t = {t} is not below the admissibility threshold r = {threshold}")]
    Threshold { t: f64, threshold: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl LabError {
    pub(crate) fn domain(what: &'static str, value: f64, bound: f64) -> Self {
        LabError::Domain { what, value, bound }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Config(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
