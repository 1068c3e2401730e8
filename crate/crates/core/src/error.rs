use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },

    #[error("no valid records ({rejected} rows rejected)")]
    NoValidRecords { rejected: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown device `{0}`")]
    UnknownDevice(String),

    #[error("reference and sensors share no overlapping time range")]
    NoOverlap,

    #[error("no co-populated cells for {0}")]
    NoCoPopulatedCells(String),

    #[error("series lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },

    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("regressor is constant (zero S_xx)")]
    DegenerateRegressor,

    #[error("series is constant; correlation undefined")]
    ConstantSeries,

    #[error("reference mean is zero; NRMSE undefined")]
    ZeroReferenceMean,

    #[error("reference range is zero; NRMSE undefined")]
    ZeroReferenceRange,

    #[error("non-positive value {value} at index {index}; log transform undefined")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("design matrix is rank deficient: {0}")]
    Collinear(String),

    #[error("panel has no humidity data")]
    MissingHumidity,

    #[error("operation requires an hourly panel")]
    NotHourly,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors meaning "the inputs were fine but nothing was left to analyse".
    pub fn is_empty_result(&self) -> bool {
        matches!(
            self,
            Error::NoOverlap | Error::NoCoPopulatedCells(_) | Error::InsufficientData { .. }
        )
    }
}
