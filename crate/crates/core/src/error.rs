use thiserror::Error;

/// Errors raised by the geodp core.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("point ({lat}, {lon}) lies outside the grid bounding box")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid mechanism config: {0}")]
    InvalidMechanism(String),
    #[error("invalid epsilon {0}: must be a non-negative finite number")]
    InvalidEpsilon(f64),
    #[error("invalid delta {0}: must lie in (0, 1)")]
    InvalidDelta(f64),
    #[error("invalid sigma {0}: must be positive and finite")]
    InvalidSigma(f64),
    #[error("invalid sensitivity {0}: must be positive and finite")]
    InvalidSensitivity(f64),
    #[error("input vector is not one-hot")]
    NotOneHot,
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("flip probability {0} is too close to 1/2 to invert")]
    DegenerateFlipProbability(f64),
    #[error("mechanism {mechanism} is not admissible for scenario {scenario}")]
    InadmissibleMechanism { mechanism: String, scenario: String },
    #[error("reports carry mixed payload types")]
    MixedPayloads,
    #[error("privacy budget exceeded: would reach epsilon {epsilon}, delta {delta}")]
    BudgetExceeded { epsilon: f64, delta: f64 },
    #[error("invalid budget entry: {0}")]
    InvalidEntry(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
