//! Accuracy metrics for one sensor against the reference, and precision metrics
//! across the units of one sensor model.
//!
//! Orientation follows the collocation convention: `x` is the reference, `y` the
//! sensor. Bias is reported as sensor minus reference.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{AlignedPanel, DeploymentConfig};
use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};
use crate::output::{fmt_opt, round_opt, round_to};

/// Co-populated (reference, sensor) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairedSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                x: x.len(),
                y: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("series contain non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    /// Pairs the panel's reference with `device_id` over every co-populated period.
    pub fn from_panel(panel: &AlignedPanel, device_id: &str) -> Result<Self> {
        Self::from_panel_periods(panel, device_id, 0..panel.len())
    }

    /// Same as [`from_panel`](Self::from_panel) restricted to the given period indices.
    pub fn from_panel_periods(
        panel: &AlignedPanel,
        device_id: &str,
        periods: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let sensor = panel.column(device_id)?;
        let reference = panel.reference();
        let (x, y): (Vec<f64>, Vec<f64>) = periods
            .into_iter()
            .filter_map(|i| Some((reference[i]?, sensor[i]?)))
            .unzip();
        if x.is_empty() {
            return Err(Error::NoCoPopulatedCells(device_id.to_string()));
        }
        Self::new(x, y)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn require(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            Err(Error::InsufficientData {
                needed,
                got: self.len(),
            })
        } else {
            Ok(())
        }
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

/// Centered sums (S_xx, S_yy, S_xy) and means.
struct Moments {
    x_bar: f64,
    y_bar: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Moments {
    let n = x.len() as f64;
    let x_bar = numeric::sum(x.iter().copied()) / n;
    let y_bar = numeric::sum(y.iter().copied()) / n;
    let (mut sxx, mut syy, mut sxy) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - x_bar, yi - y_bar);
        sxx.add(dx * dx);
        syy.add(dy * dy);
        sxy.add(dx * dy);
    }
    Moments {
        x_bar,
        y_bar,
        sxx: sxx.value(),
        syy: syy.value(),
        sxy: sxy.value(),
    }
}

/// Least-squares slope and intercept of sensor on reference.
pub fn ols_slope_intercept(p: &PairedSeries) -> Result<(f64, f64)> {
    p.require(2)?;
    if is_constant(&p.x) {
        return Err(Error::DegenerateRegressor);
    }
    let m = moments(&p.x, &p.y);
    let slope = m.sxy / m.sxx;
    Ok((slope, m.y_bar - slope * m.x_bar))
}

/// Squared Pearson correlation between reference and sensor.
pub fn r_squared(p: &PairedSeries) -> Result<f64> {
    p.require(2)?;
    if is_constant(&p.x) || is_constant(&p.y) {
        return Err(Error::ConstantSeries);
    }
    let m = moments(&p.x, &p.y);
    Ok((m.sxy * m.sxy / (m.sxx * m.syy)).clamp(0.0, 1.0))
}

pub fn mae(p: &PairedSeries) -> f64 {
    numeric::sum(p.x.iter().zip(&p.y).map(|(x, y)| (x - y).abs())) / p.len() as f64
}

/// Mean of sensor minus reference.
pub fn mbe(p: &PairedSeries) -> f64 {
    numeric::sum(p.x.iter().zip(&p.y).map(|(x, y)| y - x)) / p.len() as f64
}

pub fn rmse_single(p: &PairedSeries) -> f64 {
    (numeric::sum(p.x.iter().zip(&p.y).map(|(x, y)| (y - x) * (y - x))) / p.len() as f64).sqrt()
}

/// RMSE normalised by the reference mean and by its max-min range, both in %.
pub fn nrmse(rmse: f64, reference: &[f64]) -> Result<(f64, f64)> {
    let mean = numeric::mean(reference.iter().copied()).ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    if mean <= 0.0 {
        return Err(Error::ZeroReferenceMean);
    }
    let (lo, hi) = numeric::min_max(reference).expect("non-empty");
    if hi <= lo {
        return Err(Error::ZeroReferenceRange);
    }
    Ok((rmse / mean * 100.0, rmse / (hi - lo) * 100.0))
}

fn columns<'a>(panel: &'a AlignedPanel, group: &[String]) -> Result<Vec<&'a [Option<f64>]>> {
    group.iter().map(|id| panel.column(id)).collect()
}

/// Pooled RMSE of every unit in `group` against the reference over co-populated
/// (unit, period) cells.
pub fn rmse_group(panel: &AlignedPanel, group: &[String]) -> Result<f64> {
    rmse_group_over(panel, group, 0..panel.len()).map(|(rmse, _)| rmse)
}

fn rmse_group_over(
    panel: &AlignedPanel,
    group: &[String],
    periods: impl IntoIterator<Item = usize> + Clone,
) -> Result<(f64, usize)> {
    if group.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let reference = panel.reference();
    let mut acc = CompensatedSum::new();
    let mut cells = 0usize;
    for column in columns(panel, group)? {
        for d in periods.clone() {
            if let (Some(r), Some(v)) = (reference[d], column[d]) {
                acc.add((v - r) * (v - r));
                cells += 1;
            }
        }
    }
    if cells == 0 {
        return Err(Error::NoCoPopulatedCells(group.join(",")));
    }
    Ok(((acc.value() / cells as f64).sqrt(), cells))
}

/// Inter-unit standard deviation and coefficient of variation (%).
///
/// Only periods in which every unit of the group reports contribute, so the
/// per-period group mean is always over all M units.
pub fn group_sd_cv(panel: &AlignedPanel, group: &[String]) -> Result<(f64, f64)> {
    group_sd_cv_over(panel, group, 0..panel.len()).map(|(sd, cv, _)| (sd, cv))
}

fn group_sd_cv_over(
    panel: &AlignedPanel,
    group: &[String],
    periods: impl IntoIterator<Item = usize>,
) -> Result<(f64, f64, usize)> {
    if group.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: group.len(),
        });
    }
    let cols = columns(panel, group)?;
    let m = cols.len() as f64;
    let mut squares = CompensatedSum::new();
    let mut grand = CompensatedSum::new();
    let mut periods_used = 0usize;
    for d in periods {
        let Some(values) = cols.iter().map(|c| c[d]).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let period_mean = numeric::sum(values.iter().copied()) / m;
        for v in &values {
            squares.add((v - period_mean) * (v - period_mean));
            grand.add(*v);
        }
        periods_used += 1;
    }
    if periods_used == 0 {
        return Err(Error::NoCoPopulatedCells(group.join(",")));
    }
    let cells = periods_used as f64 * m;
    let sd = (squares.value() / (cells - 1.0)).sqrt();
    let grand_mean = grand.value() / cells;
    if grand_mean <= 0.0 {
        return Err(Error::InvalidArgument("group mean is not positive; CV undefined".into()));
    }
    Ok((sd, sd / grand_mean * 100.0, periods_used))
}

/// Accuracy metrics for one unit. Regression-based fields are absent when fewer
/// than three pairs exist or a series is constant; NRMSE fields are absent when the
/// normalising reference has zero mean or range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSet {
    pub n: usize,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub mae: f64,
    pub mbe: f64,
    pub rmse: f64,
    pub nrmse_mean: Option<f64>,
    pub nrmse_range: Option<f64>,
}

pub const MIN_REGRESSION_PAIRS: usize = 3;

impl MetricSet {
    /// `reference` is the series NRMSE normalises by (the full reference record
    /// over the evaluation period, or the bin's reference values).
    pub fn compute(p: &PairedSeries, reference: &[f64]) -> Self {
        let regress = p.len() >= MIN_REGRESSION_PAIRS;
        let (slope, intercept) = match regress.then(|| ols_slope_intercept(p)) {
            Some(Ok((m, b))) => (Some(m), Some(b)),
            _ => (None, None),
        };
        let r2 = regress.then(|| r_squared(p).ok()).flatten();
        let rmse = rmse_single(p);
        let (nrmse_mean, nrmse_range) = match nrmse(rmse, reference) {
            Ok((a, b)) => (Some(a), Some(b)),
            Err(_) => (None, None),
        };
        Self {
            n: p.len(),
            slope,
            intercept,
            r_squared: r2,
            mae: mae(p),
            mbe: mbe(p),
            rmse,
            nrmse_mean,
            nrmse_range,
        }
    }

    pub fn rounded(&self, precision: usize) -> Self {
        Self {
            n: self.n,
            slope: round_opt(self.slope, precision),
            intercept: round_opt(self.intercept, precision),
            r_squared: round_opt(self.r_squared, precision),
            mae: round_to(self.mae, precision),
            mbe: round_to(self.mbe, precision),
            rmse: round_to(self.rmse, precision),
            nrmse_mean: round_opt(self.nrmse_mean, precision),
            nrmse_range: round_opt(self.nrmse_range, precision),
        }
    }
}

/// Precision metrics for one sensor model group. Absent fields could not be
/// computed (e.g. SD for a single-unit group).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetricSet {
    pub n_units: usize,
    /// (unit, period) cells behind RMSE_group.
    pub n_cells: usize,
    /// Periods with every unit reporting, behind SD and CV.
    pub n_periods: usize,
    pub rmse_group: Option<f64>,
    pub sd: Option<f64>,
    pub cv: Option<f64>,
    pub nrmse_group_mean: Option<f64>,
    pub nrmse_group_range: Option<f64>,
}

impl GroupMetricSet {
    pub fn compute(panel: &AlignedPanel, group: &[String], reference: &[f64]) -> Self {
        Self::compute_over(panel, group, 0..panel.len(), reference)
    }

    pub fn compute_over(
        panel: &AlignedPanel,
        group: &[String],
        periods: impl IntoIterator<Item = usize> + Clone,
        reference: &[f64],
    ) -> Self {
        let (rmse_group, n_cells) = match rmse_group_over(panel, group, periods.clone()) {
            Ok((r, c)) => (Some(r), c),
            Err(_) => (None, 0),
        };
        let (sd, cv, n_periods) = match group_sd_cv_over(panel, group, periods) {
            Ok((sd, cv, n)) => (Some(sd), Some(cv), n),
            Err(_) => (None, None, 0),
        };
        let normalised = rmse_group.and_then(|r| nrmse(r, reference).ok());
        Self {
            n_units: group.len(),
            n_cells,
            n_periods,
            rmse_group,
            sd,
            cv,
            nrmse_group_mean: normalised.map(|(m, _)| m),
            nrmse_group_range: normalised.map(|(_, r)| r),
        }
    }

    pub fn rounded(&self, precision: usize) -> Self {
        Self {
            rmse_group: round_opt(self.rmse_group, precision),
            sd: round_opt(self.sd, precision),
            cv: round_opt(self.cv, precision),
            nrmse_group_mean: round_opt(self.nrmse_group_mean, precision),
            nrmse_group_range: round_opt(self.nrmse_group_range, precision),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitMetrics {
    pub device_id: String,
    pub group: String,
    #[serde(flatten)]
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub group: String,
    #[serde(flatten)]
    pub metrics: GroupMetricSet,
}

/// Unit and group metrics over a whole panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub units: Vec<UnitMetrics>,
    pub groups: Vec<GroupMetrics>,
    /// Units with no period in common with the reference.
    pub skipped_units: Vec<String>,
}

/// Evaluates every unit and group of the deployment. Fails only when no unit
/// shares a single period with the reference.
pub fn evaluate_panel(panel: &AlignedPanel, config: &DeploymentConfig) -> Result<Evaluation> {
    let reference = panel.reference_values();
    let members: Vec<(&String, &String)> = config
        .groups
        .iter()
        .flat_map(|(g, units)| units.iter().map(move |u| (g, u)))
        .collect();
    let computed = members
        .par_iter()
        .map(|&(group, unit)| match PairedSeries::from_panel(panel, unit) {
            Ok(p) => Ok(Ok(UnitMetrics {
                device_id: unit.clone(),
                group: group.clone(),
                metrics: MetricSet::compute(&p, &reference),
            })),
            Err(Error::NoCoPopulatedCells(_)) => Ok(Err(unit.clone())),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut units, mut skipped_units) = (Vec::new(), Vec::new());
    for c in computed {
        match c {
            Ok(u) => units.push(u),
            Err(id) => skipped_units.push(id),
        }
    }
    if units.is_empty() {
        return Err(Error::NoCoPopulatedCells("every unit".into()));
    }
    let groups = config
        .groups
        .iter()
        .map(|(name, units)| GroupMetrics {
            group: name.clone(),
            metrics: GroupMetricSet::compute(panel, units, &reference),
        })
        .filter(|g| g.metrics.n_cells > 0)
        .collect();
    Ok(Evaluation {
        units,
        groups,
        skipped_units,
    })
}

pub const UNIT_CSV_HEADER: &str =
    "device_id,group,n,slope,intercept,r_squared,mae,mbe,rmse,nrmse_mean,nrmse_range";
pub const GROUP_CSV_HEADER: &str =
    "group,n_units,n_cells,n_periods,rmse_group,sd,cv,nrmse_group_mean,nrmse_group_range";

pub fn units_csv(rows: &[UnitMetrics], precision: usize) -> String {
    let mut out = String::from(UNIT_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let m = &row.metrics;
        let fields = [
            row.device_id.clone(),
            row.group.clone(),
            m.n.to_string(),
            fmt_opt(m.slope, precision),
            fmt_opt(m.intercept, precision),
            fmt_opt(m.r_squared, precision),
            fmt_opt(Some(m.mae), precision),
            fmt_opt(Some(m.mbe), precision),
            fmt_opt(Some(m.rmse), precision),
            fmt_opt(m.nrmse_mean, precision),
            fmt_opt(m.nrmse_range, precision),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn groups_csv(rows: &[GroupMetrics], precision: usize) -> String {
    let mut out = String::from(GROUP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let m = &row.metrics;
        let fields = [
            row.group.clone(),
            m.n_units.to_string(),
            m.n_cells.to_string(),
            m.n_periods.to_string(),
            fmt_opt(m.rmse_group, precision),
            fmt_opt(m.sd, precision),
            fmt_opt(m.cv, precision),
            fmt_opt(m.nrmse_group_mean, precision),
            fmt_opt(m.nrmse_group_range, precision),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
