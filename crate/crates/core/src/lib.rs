//! Collocation evaluation of low-cost PM2.5 sensors.
//!
//! The crate takes raw 15-minute collocation records for a reference monitor and
//! several groups of identical low-cost units, averages them onto hourly or daily
//! grids, and computes:
//!
//! - accuracy and precision metrics per unit and per sensor group ([`metrics`]),
//! - the same metrics over PM2.5 x relative-humidity bins plus diurnal and monthly
//!   aggregates ([`granular`]),
//! - log-log calibration fits with confidence and prediction intervals, humidity
//!   significance tests and a held-out linear correction ([`regression`]),
//! - pass/fail grading against the USEPA sensor performance targets ([`compliance`]),
//! - datasheet-based sensor screening ([`catalog`]).

pub mod catalog;
pub mod compliance;
pub mod data;
pub mod error;
pub mod granular;
pub mod metrics;
pub mod numeric;
pub mod output;
pub mod regression;
pub mod stats;

pub use error::{Error, Result};
