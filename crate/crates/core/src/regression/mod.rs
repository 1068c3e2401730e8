//! Calibration regressions and the uncertainty they carry.
//!
//! - [`fit`]: OLS on raw or log-log data with standardized-residual outlier removal
//! - [`interval`]: confidence and prediction intervals, back-transformed to µg/m³
//! - [`significance`]: does adding humidity to the calibration model help?
//! - [`correction`]: a seeded train/test evaluation of a linear correction

pub mod correction;
pub mod fit;
pub mod interval;
pub mod significance;

pub use correction::{linear_correction_eval, split_indices, CorrectionEval};
pub use fit::{fit, fit_loglog_with_outlier_removal, Orientation, OutlierPolicy, RegressionFit, Transform};
pub use interval::{confidence_interval, estimate, intervals_csv, prediction_interval, Band, IntervalEstimate};
pub use significance::{humidity_significance, ModelKind, ModelSummary, SignificanceResult, ALPHA};
