use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("domain error evaluating valuation at t={t}: {reason}")]
    ValuationDomain { t: f64, reason: String },

    #[error("hazard rate undefined at t={t}: {reason}")]
    HazardUndefined { t: f64, reason: String },

    #[error("density undefined for a point-mass distribution")]
    PointMassDensity,

    #[error("type {t} for user {user} is not a grid node")]
    OffGrid { user: usize, t: f64 },

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("oracle search space too large: {candidates} candidates exceeds budget {budget}")]
    SearchSpaceTooLarge { candidates: u128, budget: u128 },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("scenario parse error: {0}")]
    ScenarioParse(String),

    #[error("scenario validation failed: {0}")]
    ScenarioInvalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
