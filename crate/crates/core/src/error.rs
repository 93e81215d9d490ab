use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// A quantity that must be real, normalized or positive drifted past its tolerance.
    #[error("numerical consistency: {0}")]
    Consistency(String),

    #[error("negative probability or intensity {value:e} (tolerance {tolerance:e})")]
    Positivity { value: f64, tolerance: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("measurement matrix is ill-conditioned, singular values {singular_values:?}")]
    IllConditioned { singular_values: Vec<f64> },

    #[error("likelihood degenerate: model probability {value:e} below floor {floor:e} where data is present")]
    LikelihoodDegeneracy { value: f64, floor: f64 },

    #[error("support violation: intensity {intensity:e} vanishes where |M| = {weight:e}")]
    SupportViolation { intensity: f64, weight: f64 },

    #[error("unphysical Bloch vector {0:?}")]
    Unphysical([f64; 4]),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures caused by the inputs rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse(_) | Error::Unphysical(_) | Error::InvalidProbabilities(_)
        )
    }
}
