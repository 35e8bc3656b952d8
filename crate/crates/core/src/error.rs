use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in channel {channel} at row {row}")]
    NonFinite { channel: usize, row: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{message} (row {row})")]
    Data { row: usize, message: String },

    #[error("Hermitian eigensolver did not converge at frequency index {0}")]
    EigenNoConvergence(usize),

    #[error("filter for component {component} has imaginary residual {residual:e}; eigenvectors are not conjugate-symmetric across frequencies")]
    ComplexFilter { component: usize, residual: f64 },

    #[error("total variance is zero")]
    ZeroVariance,

    #[error("band [{low}, {high}] Hz contains no frequency bins")]
    EmptyBand { low: f64, high: f64 },

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("AR coefficients ({phi1}, {phi2}) are explosive: characteristic root inside the unit circle")]
    NonStationary { phi1: f64, phi2: f64 },

    #[error("MA coefficient {0} is not invertible")]
    NonInvertible(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::UnknownScenario(_)
            | Error::EmptyBand { .. }
            | Error::NonStationary { .. }
            | Error::NonInvertible(_) => 2,
            Error::NonFinite { .. } | Error::InvalidSeries(_) | Error::Data { .. } | Error::Io(_) => 3,
            Error::EigenNoConvergence(_) | Error::ComplexFilter { .. } | Error::ZeroVariance => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
