use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::{DeploymentConfig, SampleRecord};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

const HOUR: i64 = 3600;
const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interval {
    Hourly,
    Daily,
}

impl Interval {
    pub fn step_seconds(self) -> i64 {
        match self {
            Interval::Hourly => HOUR,
            Interval::Daily => DAY,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Interval::Hourly => "hourly",
            Interval::Daily => "daily",
        }
    }
}

impl std::str::FromStr for Interval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hourly" => Ok(Interval::Hourly),
            "daily" => Ok(Interval::Daily),
            other => Err(Error::InvalidArgument(format!(
                "interval must be `hourly` or `daily`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Column {
    device_id: String,
    values: Vec<Option<f64>>,
    coverage: Vec<u32>,
}

/// Reference and sensor series averaged onto a common hourly or daily grid.
///
/// Cells that failed the completeness rule are `None`. The panel is immutable once
/// built; every analysis borrows it read-only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedPanel {
    interval: Interval,
    reference_id: String,
    timezone_offset_minutes: i32,
    grid: Vec<DateTime<Utc>>,
    columns: Vec<Column>,
    temperature: Vec<Option<f64>>,
    humidity: Vec<Option<f64>>,
}

impl AlignedPanel {
    /// Builds a panel directly from already-averaged columns. Coverage is recorded
    /// as one sample per populated cell.
    pub fn new(
        interval: Interval,
        reference_id: impl Into<String>,
        timezone_offset_minutes: i32,
        start: DateTime<Utc>,
        columns: Vec<(String, Vec<Option<f64>>)>,
        temperature: Vec<Option<f64>>,
        humidity: Vec<Option<f64>>,
    ) -> Result<Self> {
        let reference_id = reference_id.into();
        let len = columns.first().map_or(0, |(_, v)| v.len());
        if len == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        for (id, values) in &columns {
            if values.len() != len {
                return Err(Error::LengthMismatch {
                    x: len,
                    y: values.len(),
                });
            }
            if values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("column `{id}` has non-finite values")));
            }
        }
        for side in [&temperature, &humidity] {
            if side.len() != len {
                return Err(Error::LengthMismatch {
                    x: len,
                    y: side.len(),
                });
            }
        }
        if !columns.iter().any(|(id, _)| *id == reference_id) {
            return Err(Error::UnknownDevice(reference_id));
        }
        let step = interval.step_seconds();
        let grid = (0..len as i64)
            .map(|i| start + chrono::Duration::seconds(i * step))
            .collect();
        let columns = columns
            .into_iter()
            .map(|(device_id, values)| Column {
                coverage: values.iter().map(|v| u32::from(v.is_some())).collect(),
                device_id,
                values,
            })
            .collect();
        Ok(Self {
            interval,
            reference_id,
            timezone_offset_minutes,
            grid,
            columns,
            temperature,
            humidity,
        })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn reference_id(&self) -> &str {
        &self.reference_id
    }

    pub fn timezone_offset_minutes(&self) -> i32 {
        self.timezone_offset_minutes
    }

    pub fn grid(&self) -> &[DateTime<Utc>] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn devices(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.device_id.as_str())
    }

    fn find(&self, device_id: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.device_id == device_id)
            .ok_or_else(|| Error::UnknownDevice(device_id.to_string()))
    }

    pub fn column(&self, device_id: &str) -> Result<&[Option<f64>]> {
        self.find(device_id).map(|c| c.values.as_slice())
    }

    pub fn coverage(&self, device_id: &str) -> Result<&[u32]> {
        self.find(device_id).map(|c| c.coverage.as_slice())
    }

    pub fn reference(&self) -> &[Option<f64>] {
        self.column(&self.reference_id)
            .expect("constructor guarantees the reference column")
    }

    pub fn temperature(&self) -> &[Option<f64>] {
        &self.temperature
    }

    pub fn humidity(&self) -> &[Option<f64>] {
        &self.humidity
    }

    pub fn has_humidity(&self) -> bool {
        self.humidity.iter().any(Option::is_some)
    }

    /// Populated reference values in grid order.
    pub fn reference_values(&self) -> Vec<f64> {
        self.reference().iter().flatten().copied().collect()
    }

    /// Period start shifted into local time.
    pub fn local_start(&self, index: usize) -> chrono::NaiveDateTime {
        let offset = chrono::Duration::minutes(i64::from(self.timezone_offset_minutes));
        (self.grid[index] + offset).naive_utc()
    }

    pub fn local_hour(&self, index: usize) -> u32 {
        self.local_start(index).hour()
    }

    /// `(year, month)` of the period start in local time.
    pub fn local_month(&self, index: usize) -> (i32, u32) {
        let t = self.local_start(index);
        (t.year(), t.month())
    }

    /// Renders the panel as CSV: `period_start`, one column per device, then the
    /// reference temperature and humidity. Gaps are empty strings.
    pub fn to_csv(&self, precision: usize) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["period_start".to_string()];
        header.extend(self.columns.iter().map(|c| c.device_id.clone()));
        header.push("temperature".into());
        header.push("humidity".into());
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.grid[i].format("%Y-%m-%dT%H:%M:%SZ").to_string()];
            row.extend(
                self.columns
                    .iter()
                    .map(|c| crate::output::fmt_opt(c.values[i], precision)),
            );
            row.push(crate::output::fmt_opt(self.temperature[i], precision));
            row.push(crate::output::fmt_opt(self.humidity[i], precision));
            out.write_record(&row)?;
        }
        let bytes = out.into_inner().map_err(|e| Error::io("<panel>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, Copy)]
struct Accumulator {
    sum: CompensatedSum,
    count: u32,
    min: f64,
    max: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Self {
            sum: CompensatedSum::new(),
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.sum.add(v);
        self.count += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    /// Mean if at least `required` samples contributed.
    fn mean(&self, required: u32) -> Option<f64> {
        (self.count >= required && self.count > 0)
            .then(|| (self.sum.value() / f64::from(self.count)).clamp(self.min, self.max))
    }
}

type Bins = BTreeMap<i64, Accumulator>;

fn required(completeness: f64, expected: u32) -> u32 {
    ((completeness * f64::from(expected)) - 1e-9).ceil().max(1.0) as u32
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Averages raw records onto an hourly or daily grid.
///
/// Hourly periods are `[HH:00, HH+1:00)` on the local clock given by the config's
/// timezone offset and are labelled by their start; a period is populated when at
/// least `completeness` of the expected base samples are present. Daily periods are
/// local midnight to midnight and are averaged from populated hourly cells under the
/// same rule (18 of 24 at the default 0.75).
pub fn align_and_average(
    records: &[SampleRecord],
    config: &DeploymentConfig,
    interval: Interval,
) -> Result<AlignedPanel> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    check_overlap(records, config)?;

    let offset = i64::from(config.timezone_offset_minutes) * 60;
    let devices = config.device_order();
    let mut pm: BTreeMap<&str, Bins> = devices.iter().map(|d| (d.as_str(), Bins::new())).collect();
    let mut temperature = Bins::new();
    let mut humidity = Bins::new();
    let (mut first, mut last) = (i64::MAX, i64::MIN);

    for r in records {
        let Some(bins) = pm.get_mut(r.device_id.as_str()) else {
            continue;
        };
        let hour = floor_div(r.timestamp.timestamp() + offset, HOUR);
        first = first.min(hour);
        last = last.max(hour);
        bins.entry(hour).or_default().push(r.pm25);
        if r.device_id == config.reference_id {
            if let Some(t) = r.temperature {
                temperature.entry(hour).or_default().push(t);
            }
            if let Some(h) = r.humidity {
                humidity.entry(hour).or_default().push(h);
            }
        }
    }
    if first > last {
        return Err(Error::NoOverlap);
    }

    let need_hour = required(config.completeness, config.base_samples_per_hour());
    let hourly = |bins: &Bins| -> Vec<(Option<f64>, u32)> {
        (first..=last)
            .map(|h| bins.get(&h).map_or((None, 0), |a| (a.mean(need_hour), a.count)))
            .collect()
    };

    let instant = |local_seconds: i64| {
        Utc.timestamp_opt(local_seconds - offset, 0)
            .single()
            .expect("grid instants are in range")
    };

    let (start, cells): (DateTime<Utc>, Vec<Vec<(Option<f64>, u32)>>) = match interval {
        Interval::Hourly => {
            let mut cols: Vec<_> = devices.iter().map(|d| hourly(&pm[d.as_str()])).collect();
            cols.push(hourly(&temperature));
            cols.push(hourly(&humidity));
            (instant(first * HOUR), cols)
        }
        Interval::Daily => {
            let need_day = required(config.completeness, 24);
            let first_day = floor_div(first, 24);
            let last_day = floor_div(last, 24);
            let daily = |bins: &Bins| -> Vec<(Option<f64>, u32)> {
                let mut days: Bins = Bins::new();
                for (h, (v, _)) in (first..=last).zip(hourly(bins)) {
                    if let Some(v) = v {
                        days.entry(floor_div(h, 24)).or_default().push(v);
                    }
                }
                (first_day..=last_day)
                    .map(|d| days.get(&d).map_or((None, 0), |a| (a.mean(need_day), a.count)))
                    .collect()
            };
            let mut cols: Vec<_> = devices.iter().map(|d| daily(&pm[d.as_str()])).collect();
            cols.push(daily(&temperature));
            cols.push(daily(&humidity));
            (instant(first_day * DAY), cols)
        }
    };

    let mut cells = cells;
    let humidity_col: Vec<Option<f64>> = cells.pop().unwrap().into_iter().map(|c| c.0).collect();
    let temperature_col: Vec<Option<f64>> = cells.pop().unwrap().into_iter().map(|c| c.0).collect();
    let step = interval.step_seconds();
    let grid = (0..humidity_col.len() as i64)
        .map(|i| start + chrono::Duration::seconds(i * step))
        .collect();
    let columns = devices
        .into_iter()
        .zip(cells)
        .map(|(device_id, col)| {
            let (values, coverage) = col.into_iter().unzip();
            Column {
                device_id,
                values,
                coverage,
            }
        })
        .collect();

    Ok(AlignedPanel {
        interval,
        reference_id: config.reference_id.clone(),
        timezone_offset_minutes: config.timezone_offset_minutes,
        grid,
        columns,
        temperature: temperature_col,
        humidity: humidity_col,
    })
}

fn check_overlap(records: &[SampleRecord], config: &DeploymentConfig) -> Result<()> {
    let span = |id: &str| {
        records
            .iter()
            .filter(|r| r.device_id == id)
            .map(|r| r.timestamp)
            .fold(None, |acc: Option<(DateTime<Utc>, DateTime<Utc>)>, t| {
                Some(acc.map_or((t, t), |(lo, hi)| (lo.min(t), hi.max(t))))
            })
    };
    let (ref_lo, ref_hi) = span(&config.reference_id).ok_or(Error::NoOverlap)?;
    let overlaps = config
        .units()
        .filter_map(span)
        .any(|(lo, hi)| lo <= ref_hi && ref_lo <= hi);
    if overlaps {
        Ok(())
    } else {
        Err(Error::NoOverlap)
    }
}

/// Fraction of grid cells in which the device has a populated value.
pub fn uptime(panel: &AlignedPanel, device_id: &str) -> Result<f64> {
    let column = panel.column(device_id)?;
    let populated = column.iter().filter(|v| v.is_some()).count();
    Ok(populated as f64 / column.len() as f64)
}

/// Descriptive statistics of one panel column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceSummary {
    pub device_id: String,
    pub populated: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub uptime: f64,
}

/// One row per device, reference first.
pub fn panel_summary(panel: &AlignedPanel) -> Vec<DeviceSummary> {
    panel
        .columns
        .iter()
        .map(|c| {
            let values: Vec<f64> = c.values.iter().flatten().copied().collect();
            let range = crate::numeric::min_max(&values);
            DeviceSummary {
                device_id: c.device_id.clone(),
                populated: values.len(),
                min: range.map(|r| r.0),
                max: range.map(|r| r.1),
                mean: crate::numeric::mean(values.iter().copied()),
                uptime: values.len() as f64 / panel.len() as f64,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[DeviceSummary], precision: usize) -> String {
    use crate::output::{fmt_f64, fmt_opt};
    let mut out = String::from("device_id,populated,min,max,mean,uptime\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.device_id,
            r.populated,
            fmt_opt(r.min, precision),
            fmt_opt(r.max, precision),
            fmt_opt(r.mean, precision),
            fmt_f64(r.uptime, precision)
        ));
    }
    out
}
