use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge after {subdivisions} subdivisions (estimate {estimate:e}, error {abs_err:e})")]
    QuadratureNonConvergence {
        estimate: f64,
        abs_err: f64,
        subdivisions: usize,
    },

    #[error("closed form not applicable: {0}")]
    UnsupportedClosedForm(String),

    #[error("energy efficiency undefined: total area power consumption is zero")]
    ZeroPowerConsumption,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("scenario file error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidScenario(_) | Error::InvalidArgument(_) | Error::Json(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
