//! Ingestion, time alignment, averaging and quality screening of raw collocation
//! time series.

mod config;
mod ingest;
mod panel;
mod quality;

pub use config::DeploymentConfig;
pub use ingest::{ingest_csv, ingest_reader, IngestDiagnostic, Ingested, SampleRecord, CSV_HEADER};
pub use panel::{align_and_average, panel_summary, summary_csv, uptime, AlignedPanel, DeviceSummary, Interval};
pub use quality::{detect_saturation, gap_flags, group_drift_screen, quality_csv, FlagKind, QualityFlag};
