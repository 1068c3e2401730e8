//! Granular analysis: metrics within PM2.5 x relative-humidity bins, the data
//! distribution over those bins, and diurnal / monthly aggregates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{AlignedPanel, DeploymentConfig, Interval};
use crate::error::{Error, Result};
use crate::metrics::{self, GroupMetricSet, GroupMetrics, MetricSet, PairedSeries, UnitMetrics};
use crate::numeric;
use crate::output::{finish_csv, fmt_f64, fmt_opt};

pub const DEFAULT_PM_WIDTH: f64 = 100.0;
pub const DEFAULT_RH_WIDTH: f64 = 10.0;
pub const DEFAULT_MIN_HOURS: usize = 10;
pub const DISTRIBUTION_PM_WIDTH: f64 = 10.0;

/// A PM2.5 x RH cell, left-closed and right-open on both axes except that RH = 100
/// joins the top humidity bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinKey {
    pub pm_lo: f64,
    pub pm_hi: f64,
    pub rh_lo: f64,
    pub rh_hi: f64,
}

impl Eq for BinKey {}

impl Ord for BinKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.pm_lo
            .total_cmp(&other.pm_lo)
            .then(self.rh_lo.total_cmp(&other.rh_lo))
            .then(self.pm_hi.total_cmp(&other.pm_hi))
            .then(self.rh_hi.total_cmp(&other.rh_hi))
    }
}

impl PartialOrd for BinKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl BinKey {
    fn csv_fields(&self) -> [String; 4] {
        [self.pm_lo, self.pm_hi, self.rh_lo, self.rh_hi].map(|v| format!("{v}"))
    }
}

pub fn assign_bin(pm: f64, rh: f64, pm_width: f64, rh_width: f64) -> Result<BinKey> {
    if !(pm_width > 0.0 && rh_width > 0.0) {
        return Err(Error::InvalidArgument("bin widths must be positive".into()));
    }
    if !(pm >= 0.0) || !pm.is_finite() {
        return Err(Error::InvalidArgument(format!("PM2.5 {pm} is not a valid concentration")));
    }
    if !(0.0..=100.0).contains(&rh) {
        return Err(Error::InvalidArgument(format!("humidity {rh} outside [0, 100]")));
    }
    let pm_index = (pm / pm_width).floor();
    let top_rh_index = (100.0 / rh_width).ceil() - 1.0;
    let rh_index = (rh / rh_width).floor().min(top_rh_index);
    Ok(BinKey {
        pm_lo: pm_index * pm_width,
        pm_hi: (pm_index + 1.0) * pm_width,
        rh_lo: rh_index * rh_width,
        rh_hi: (rh_index + 1.0) * rh_width,
    })
}

/// Which PM value places a period into a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BinBasis {
    /// Reference concentration; per-unit and per-group metrics share bins.
    #[default]
    Reference,
    /// Each unit's own reading; group metrics are not defined in this mode.
    Sensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinSettings {
    pub pm_width: f64,
    pub rh_width: f64,
    pub min_hours: usize,
    pub basis: BinBasis,
}

impl Default for BinSettings {
    fn default() -> Self {
        Self {
            pm_width: DEFAULT_PM_WIDTH,
            rh_width: DEFAULT_RH_WIDTH,
            min_hours: DEFAULT_MIN_HOURS,
            basis: BinBasis::Reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinEntry {
    pub key: BinKey,
    /// Hours of data in the bin.
    pub n_hours: usize,
    /// Co-populated (reference, unit) pairs over all units.
    pub pair_count: usize,
    pub units: Vec<UnitMetrics>,
    pub groups: Vec<GroupMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedBin {
    pub key: BinKey,
    pub n_hours: usize,
    pub pair_count: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedReport {
    pub settings: BinSettings,
    pub bins: Vec<BinEntry>,
    pub excluded: Vec<ExcludedBin>,
    /// Periods with a reference value but no humidity, which cannot be binned.
    pub unbinned_periods: usize,
}

#[derive(Default)]
struct BinContent {
    periods: BTreeSet<usize>,
    unit_periods: BTreeMap<String, Vec<usize>>,
}

impl BinContent {
    fn pair_count(&self) -> usize {
        self.unit_periods.values().map(Vec::len).sum()
    }
}

/// Metrics per PM x RH bin for every unit and group of the deployment.
///
/// Bins with fewer than `min_hours` hours are reported in `excluded` with their
/// counts instead of being dropped silently.
pub fn binned_metrics(panel: &AlignedPanel, config: &DeploymentConfig, settings: BinSettings) -> Result<BinnedReport> {
    if panel.interval() != Interval::Hourly {
        return Err(Error::NotHourly);
    }
    if !panel.has_humidity() {
        return Err(Error::MissingHumidity);
    }
    let reference = panel.reference();
    let humidity = panel.humidity();
    let units: Vec<&str> = config.units().collect();
    let unit_columns = units.iter().map(|u| panel.column(u)).collect::<Result<Vec<_>>>()?;

    let mut contents: BTreeMap<BinKey, BinContent> = BTreeMap::new();
    let mut unbinned = 0usize;
    for i in 0..panel.len() {
        let Some(r) = reference[i] else { continue };
        let Some(rh) = humidity[i] else {
            unbinned += 1;
            continue;
        };
        if settings.basis == BinBasis::Reference {
            let key = assign_bin(r, rh, settings.pm_width, settings.rh_width)?;
            contents.entry(key).or_default().periods.insert(i);
        }
        for (unit, column) in units.iter().zip(&unit_columns) {
            let Some(v) = column[i] else { continue };
            let basis_value = match settings.basis {
                BinBasis::Reference => r,
                BinBasis::Sensor => v,
            };
            let key = assign_bin(basis_value, rh, settings.pm_width, settings.rh_width)?;
            let content = contents.entry(key).or_default();
            content.periods.insert(i);
            content.unit_periods.entry(unit.to_string()).or_default().push(i);
        }
    }

    let (kept, dropped): (Vec<_>, Vec<_>) = contents
        .into_iter()
        .partition(|(_, c)| c.periods.len() >= settings.min_hours);

    let excluded = dropped
        .into_iter()
        .map(|(key, c)| ExcludedBin {
            key,
            n_hours: c.periods.len(),
            pair_count: c.pair_count(),
            reason: format!("{} hours of data, minimum is {}", c.periods.len(), settings.min_hours),
        })
        .collect();

    let bins = kept
        .par_iter()
        .map(|(key, content)| bin_entry(panel, config, settings, *key, content))
        .collect::<Result<Vec<_>>>()?;

    Ok(BinnedReport {
        settings,
        bins,
        excluded,
        unbinned_periods: unbinned,
    })
}

fn bin_entry(
    panel: &AlignedPanel,
    config: &DeploymentConfig,
    settings: BinSettings,
    key: BinKey,
    content: &BinContent,
) -> Result<BinEntry> {
    let reference = panel.reference();
    let bin_reference: Vec<f64> = content.periods.iter().filter_map(|&i| reference[i]).collect();
    let mut units = Vec::new();
    for (group, members) in &config.groups {
        for unit in members {
            let Some(periods) = content.unit_periods.get(unit) else { continue };
            let pairs = PairedSeries::from_panel_periods(panel, unit, periods.iter().copied())?;
            units.push(UnitMetrics {
                device_id: unit.clone(),
                group: group.clone(),
                metrics: MetricSet::compute(&pairs, &bin_reference),
            });
        }
    }
    let groups = match settings.basis {
        BinBasis::Reference => config
            .groups
            .iter()
            .map(|(name, members)| GroupMetrics {
                group: name.clone(),
                metrics: GroupMetricSet::compute_over(panel, members, content.periods.iter().copied(), &bin_reference),
            })
            .filter(|g| g.metrics.n_cells > 0)
            .collect(),
        BinBasis::Sensor => Vec::new(),
    };
    Ok(BinEntry {
        key,
        n_hours: content.periods.len(),
        pair_count: content.pair_count(),
        units,
        groups,
    })
}

pub const BINS_LONG_HEADER: &str = "pm_lo,pm_hi,rh_lo,rh_hi,device_id,metric,value,n_hours";
pub const BINS_EXCLUDED_HEADER: &str = "pm_lo,pm_hi,rh_lo,rh_hi,n_hours,pair_count,reason";

impl BinnedReport {
    /// Long format: one row per (bin, device or group, metric). Absent metrics are
    /// omitted.
    pub fn long_csv(&self, precision: usize) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(BINS_LONG_HEADER.split(','))?;
        for bin in &self.bins {
            let key = bin.key.csv_fields();
            let hours = bin.n_hours.to_string();
            let mut emit = |id: &str, metric: &str, value: Option<f64>| -> Result<()> {
                if let Some(v) = value {
                    let mut row: Vec<String> = key.to_vec();
                    row.extend([id.to_string(), metric.to_string(), fmt_f64(v, precision), hours.clone()]);
                    out.write_record(&row)?;
                }
                Ok(())
            };
            for u in &bin.units {
                let m = &u.metrics;
                emit(&u.device_id, "n", Some(m.n as f64))?;
                emit(&u.device_id, "slope", m.slope)?;
                emit(&u.device_id, "intercept", m.intercept)?;
                emit(&u.device_id, "r_squared", m.r_squared)?;
                emit(&u.device_id, "mae", Some(m.mae))?;
                emit(&u.device_id, "mbe", Some(m.mbe))?;
                emit(&u.device_id, "rmse", Some(m.rmse))?;
                emit(&u.device_id, "nrmse_mean", m.nrmse_mean)?;
                emit(&u.device_id, "nrmse_range", m.nrmse_range)?;
            }
            for g in &bin.groups {
                let m = &g.metrics;
                emit(&g.group, "rmse_group", m.rmse_group)?;
                emit(&g.group, "sd", m.sd)?;
                emit(&g.group, "cv", m.cv)?;
                emit(&g.group, "nrmse_group_mean", m.nrmse_group_mean)?;
                emit(&g.group, "nrmse_group_range", m.nrmse_group_range)?;
            }
        }
        finish_csv(out)
    }

    pub fn excluded_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(BINS_EXCLUDED_HEADER.split(','))?;
        for bin in &self.excluded {
            let mut row: Vec<String> = bin.key.csv_fields().to_vec();
            row.extend([bin.n_hours.to_string(), bin.pair_count.to_string(), bin.reason.clone()]);
            out.write_record(&row)?;
        }
        finish_csv(out)
    }

    /// Total pairs across reported and excluded bins.
    pub fn total_pairs(&self) -> usize {
        self.bins.iter().map(|b| b.pair_count).sum::<usize>()
            + self.excluded.iter().map(|b| b.pair_count).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub key: BinKey,
    pub count: usize,
    /// Share of the PM bin's records falling in this RH bin, in %.
    pub share_pct: f64,
}

/// Record counts of one device's readings by (PM bin x RH bin), with the share of
/// each RH level within its PM bin.
pub fn data_distribution(
    panel: &AlignedPanel,
    device_id: &str,
    pm_width: f64,
    rh_width: f64,
) -> Result<Vec<DistributionRow>> {
    if !panel.has_humidity() {
        return Err(Error::MissingHumidity);
    }
    let column = panel.column(device_id)?;
    let mut counts: BTreeMap<BinKey, usize> = BTreeMap::new();
    for (v, rh) in column.iter().zip(panel.humidity()) {
        if let (Some(v), Some(rh)) = (v, rh) {
            *counts.entry(assign_bin(*v, *rh, pm_width, rh_width)?).or_default() += 1;
        }
    }
    let mut per_pm: BTreeMap<u64, usize> = BTreeMap::new();
    for (key, n) in &counts {
        *per_pm.entry(key.pm_lo.to_bits()).or_default() += n;
    }
    Ok(counts
        .into_iter()
        .map(|(key, count)| DistributionRow {
            key,
            count,
            share_pct: count as f64 / per_pm[&key.pm_lo.to_bits()] as f64 * 100.0,
        })
        .collect())
}

pub fn distribution_csv(device_id: &str, rows: &[DistributionRow], precision: usize) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["device_id", "pm_lo", "pm_hi", "rh_lo", "rh_hi", "count", "share_pct"])?;
    for row in rows {
        let mut fields = vec![device_id.to_string()];
        fields.extend(row.key.csv_fields());
        fields.push(row.count.to_string());
        fields.push(fmt_f64(row.share_pct, precision));
        out.write_record(&fields)?;
    }
    finish_csv(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiurnalRow {
    /// Local hour of day, 0-23.
    pub hour: u32,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    /// Mean PM2.5 per device, in panel device order.
    pub pm: Vec<(String, Option<f64>)>,
    /// MAE against the reference per unit.
    pub mae: Vec<(String, Option<f64>)>,
}

/// Hour-of-day profile (local time) averaged over every day of an hourly panel.
pub fn diurnal_profile(panel: &AlignedPanel, config: &DeploymentConfig) -> Result<Vec<DiurnalRow>> {
    if panel.interval() != Interval::Hourly {
        return Err(Error::NotHourly);
    }
    let mut by_hour: Vec<Vec<usize>> = vec![Vec::new(); 24];
    for i in 0..panel.len() {
        by_hour[panel.local_hour(i) as usize].push(i);
    }
    let reference = panel.reference();
    let devices = config.device_order();
    let mean_at = |col: &[Option<f64>], periods: &[usize]| numeric::mean(periods.iter().filter_map(|&i| col[i]));
    (0..24u32)
        .map(|hour| {
            let periods = &by_hour[hour as usize];
            let pm = devices
                .iter()
                .map(|d| Ok((d.clone(), mean_at(panel.column(d)?, periods))))
                .collect::<Result<Vec<_>>>()?;
            let mae = config
                .units()
                .map(|u| {
                    let col = panel.column(u)?;
                    let errs = periods.iter().filter_map(|&i| Some((col[i]? - reference[i]?).abs()));
                    Ok((u.to_string(), numeric::mean(errs)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DiurnalRow {
                hour,
                temperature: mean_at(panel.temperature(), periods),
                humidity: mean_at(panel.humidity(), periods),
                pm,
                mae,
            })
        })
        .collect()
}

pub fn diurnal_csv(rows: &[DiurnalRow], precision: usize) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let Some(first) = rows.first() else {
        return finish_csv(out);
    };
    let mut header = vec!["hour".to_string(), "temperature".into(), "humidity".into()];
    header.extend(first.pm.iter().map(|(d, _)| format!("pm_{d}")));
    header.extend(first.mae.iter().map(|(u, _)| format!("mae_{u}")));
    out.write_record(&header)?;
    for row in rows {
        let mut fields = vec![
            row.hour.to_string(),
            fmt_opt(row.temperature, precision),
            fmt_opt(row.humidity, precision),
        ];
        fields.extend(row.pm.iter().map(|(_, v)| fmt_opt(*v, precision)));
        fields.extend(row.mae.iter().map(|(_, v)| fmt_opt(*v, precision)));
        out.write_record(&fields)?;
    }
    finish_csv(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyRow {
    pub year: i32,
    pub month: u32,
    /// Periods with a reference value.
    pub n_periods: usize,
    pub mean_reference: Option<f64>,
    pub mean_humidity: Option<f64>,
    pub mean_temperature: Option<f64>,
    pub r_squared: Vec<(String, Option<f64>)>,
}

/// Calendar-month (local time) R² per unit and mean conditions. Months where no
/// unit is co-populated with the reference are omitted.
pub fn monthly_summary(panel: &AlignedPanel, config: &DeploymentConfig) -> Result<Vec<MonthlyRow>> {
    let mut months: BTreeMap<(i32, u32), Vec<usize>> = BTreeMap::new();
    for i in 0..panel.len() {
        months.entry(panel.local_month(i)).or_default().push(i);
    }
    let reference = panel.reference();
    let mut rows = Vec::new();
    for ((year, month), periods) in months {
        let mut any_pairs = false;
        let mut r_squared = Vec::new();
        for unit in config.units() {
            let r2 = match PairedSeries::from_panel_periods(panel, unit, periods.iter().copied()) {
                Ok(p) => {
                    any_pairs = true;
                    (p.len() >= metrics::MIN_REGRESSION_PAIRS)
                        .then(|| metrics::r_squared(&p).ok())
                        .flatten()
                }
                Err(Error::NoCoPopulatedCells(_)) => None,
                Err(e) => return Err(e),
            };
            r_squared.push((unit.to_string(), r2));
        }
        if !any_pairs {
            continue;
        }
        let mean_of = |col: &[Option<f64>]| numeric::mean(periods.iter().filter_map(|&i| col[i]));
        rows.push(MonthlyRow {
            year,
            month,
            n_periods: periods.iter().filter(|&&i| reference[i].is_some()).count(),
            mean_reference: mean_of(reference),
            mean_humidity: mean_of(panel.humidity()),
            mean_temperature: mean_of(panel.temperature()),
            r_squared,
        });
    }
    Ok(rows)
}

pub fn monthly_csv(rows: &[MonthlyRow], precision: usize) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let Some(first) = rows.first() else {
        return finish_csv(out);
    };
    let mut header = vec![
        "month".to_string(),
        "n_periods".into(),
        "mean_reference".into(),
        "mean_humidity".into(),
        "mean_temperature".into(),
    ];
    header.extend(first.r_squared.iter().map(|(u, _)| format!("r2_{u}")));
    out.write_record(&header)?;
    for row in rows {
        let mut fields = vec![
            format!("{:04}-{:02}", row.year, row.month),
            row.n_periods.to_string(),
            fmt_opt(row.mean_reference, precision),
            fmt_opt(row.mean_humidity, precision),
            fmt_opt(row.mean_temperature, precision),
        ];
        fields.extend(row.r_squared.iter().map(|(_, v)| fmt_opt(*v, precision)));
        out.write_record(&fields)?;
    }
    finish_csv(out)
}
