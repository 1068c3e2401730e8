use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use super::DeploymentConfig;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["timestamp", "device_id", "pm25", "temperature", "humidity"];

/// One timestamped measurement from one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub timestamp: DateTime<Utc>,
    pub device_id: String,
    /// µg/m³
    pub pm25: f64,
    /// °C
    pub temperature: Option<f64>,
    /// %RH
    pub humidity: Option<f64>,
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestDiagnostic {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<SampleRecord>,
    pub diagnostics: Vec<IngestDiagnostic>,
}

impl Ingested {
    pub fn total_rows(&self) -> usize {
        self.records.len() + self.diagnostics.len()
    }
}

pub fn ingest_csv(path: &Path, config: &DeploymentConfig) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, config)
}

/// Reads collocation rows. Bad rows become diagnostics; only a bad header or an
/// input with no valid rows fails the whole read.
pub fn ingest_reader<R: Read>(reader: R, config: &DeploymentConfig) -> Result<Ingested> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = csv.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedHeader {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for row in csv.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.diagnostics.push(IngestDiagnostic {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, config) {
            Ok(record) => {
                if seen.insert((record.device_id.clone(), record.timestamp)) {
                    out.records.push(record);
                } else {
                    out.diagnostics.push(IngestDiagnostic {
                        line,
                        reason: format!(
                            "duplicate sample for `{}` at {}",
                            record.device_id,
                            record.timestamp.format("%Y-%m-%dT%H:%M:%SZ")
                        ),
                    });
                }
            }
            Err(reason) => out.diagnostics.push(IngestDiagnostic { line, reason }),
        }
    }

    if out.records.is_empty() {
        return Err(Error::NoValidRecords {
            rejected: out.diagnostics.len(),
        });
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, config: &DeploymentConfig) -> Result<SampleRecord, String> {
    if row.len() != CSV_HEADER.len() {
        return Err(format!(
            "expected {} fields, found {}",
            CSV_HEADER.len(),
            row.len()
        ));
    }
    let timestamp = parse_timestamp(&row[0])?;
    let device_id = row[1].to_string();
    if device_id.is_empty() {
        return Err("empty device_id".into());
    }
    if !config.knows(&device_id) {
        return Err(format!("device `{device_id}` is not in the deployment config"));
    }

    let pm25 = parse_number("pm25", &row[2])?.ok_or("pm25 is missing")?;
    if pm25 < 0.0 {
        return Err(format!("pm25 {pm25} is negative"));
    }
    let temperature = parse_number("temperature", &row[3])?;
    if let Some(t) = temperature {
        if !(-40.0..=60.0).contains(&t) {
            return Err(format!("temperature {t} outside [-40, 60] °C"));
        }
    }
    let humidity = parse_number("humidity", &row[4])?;
    if let Some(h) = humidity {
        if !(0.0..=100.0).contains(&h) {
            return Err(format!("humidity {h} outside [0, 100] %"));
        }
    }

    Ok(SampleRecord {
        timestamp,
        device_id,
        pm25,
        temperature,
        humidity,
    })
}

fn parse_number(field: &str, text: &str) -> Result<Option<f64>, String> {
    if text.is_empty() {
        return Ok(None);
    }
    let value: f64 = text
        .parse()
        .map_err(|_| format!("{field} `{text}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("{field} `{text}` is not finite"));
    }
    Ok(Some(value))
}

/// RFC 3339 with an offset, or a bare `YYYY-MM-DDTHH:MM:SS` taken as UTC.
fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(ts) = DateTime::parse_from_rfc3339(text) {
        return Ok(ts.with_timezone(&Utc).trunc_subsecs(0));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(text, fmt) {
            return Ok(naive.and_utc().trunc_subsecs(0));
        }
    }
    Err(format!("timestamp `{text}` is not ISO-8601"))
}
