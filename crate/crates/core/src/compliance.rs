//! Pass/fail grading against the USEPA performance targets for PM2.5 sensors.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Interval;
use crate::error::{Error, Result};
use crate::metrics::{GroupMetricSet, GroupMetrics, MetricSet, UnitMetrics};
use crate::output::{fmt_f64, round_opt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSet {
    pub r2_min: f64,
    pub intercept_abs_max: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    /// µg/m³
    pub rmse_max: f64,
    /// percent
    pub nrmse_max: f64,
    pub sd_max: f64,
    pub cv_max: f64,
}

impl Default for ThresholdSet {
    fn default() -> Self {
        Self {
            r2_min: 0.7,
            intercept_abs_max: 5.0,
            slope_lo: 0.65,
            slope_hi: 1.35,
            rmse_max: 7.0,
            nrmse_max: 30.0,
            sd_max: 5.0,
            cv_max: 30.0,
        }
    }
}

impl ThresholdSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.r2_min,
            self.intercept_abs_max,
            self.slope_lo,
            self.slope_hi,
            self.rmse_max,
            self.nrmse_max,
            self.sd_max,
            self.cv_max,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("thresholds must be finite".into()));
        }
        if self.slope_lo >= self.slope_hi {
            return Err(Error::InvalidConfig(format!(
                "slope_lo {} must be below slope_hi {}",
                self.slope_lo, self.slope_hi
            )));
        }
        let maxima = [self.intercept_abs_max, self.rmse_max, self.nrmse_max, self.sd_max, self.cv_max];
        if maxima.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidConfig("threshold maxima must be positive".into()));
        }
        Ok(())
    }

    /// Missing keys keep their defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The metric could not be computed.
    Unavailable,
}

impl Verdict {
    fn of(value: Option<f64>, ok: impl Fn(f64) -> bool) -> Self {
        match value {
            Some(v) if ok(v) => Verdict::Pass,
            Some(_) => Verdict::Fail,
            None => Verdict::Unavailable,
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Unavailable => "n/a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub value: Option<f64>,
    pub verdict: Verdict,
}

impl Check {
    fn new(value: Option<f64>, ok: impl Fn(f64) -> bool) -> Self {
        Self {
            value,
            verdict: Verdict::of(value, ok),
        }
    }

    fn rounded(self, precision: usize) -> Self {
        Self {
            value: round_opt(self.value, precision),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitVerdicts {
    pub device_id: String,
    pub group: String,
    pub r_squared: Check,
    pub slope: Check,
    pub intercept: Check,
    /// Per-unit RMSE against `rmse_max`. Reported but not part of `overall`.
    pub rmse: Check,
    pub overall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupVerdicts {
    pub group: String,
    pub rmse_group: Check,
    pub nrmse_mean: Check,
    pub nrmse_range: Check,
    /// Passes when any of RMSE_group, NRMSE_mean or NRMSE_range meets its target.
    pub rmse_or_nrmse: Verdict,
    /// First metric that satisfied the error criterion, if any.
    pub error_basis: Option<String>,
    pub sd: Check,
    pub cv: Check,
    pub overall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub averaging: Interval,
    /// False for anything but daily averages: the targets are defined for daily data.
    pub normative: bool,
    pub thresholds: ThresholdSet,
    pub units: Vec<UnitVerdicts>,
    pub groups: Vec<GroupVerdicts>,
}

pub fn grade_unit(device_id: &str, group: &str, m: &MetricSet, t: &ThresholdSet) -> UnitVerdicts {
    grade_unit_values(device_id, group, m.r_squared, m.slope, m.intercept, Some(m.rmse), t)
}

/// Grades individual values, e.g. metrics taken from a published table.
pub fn grade_unit_values(
    device_id: &str,
    group: &str,
    r_squared: Option<f64>,
    slope: Option<f64>,
    intercept: Option<f64>,
    rmse: Option<f64>,
    t: &ThresholdSet,
) -> UnitVerdicts {
    let r_squared = Check::new(r_squared, |v| v >= t.r2_min);
    let slope = Check::new(slope, |v| v >= t.slope_lo && v <= t.slope_hi);
    let intercept = Check::new(intercept, |v| v.abs() <= t.intercept_abs_max);
    let rmse = Check::new(rmse, |v| v <= t.rmse_max);
    UnitVerdicts {
        device_id: device_id.to_string(),
        group: group.to_string(),
        overall: [r_squared, slope, intercept].iter().all(|c| c.verdict.passed()),
        r_squared,
        slope,
        intercept,
        rmse,
    }
}

pub fn grade_group(group: &str, g: &GroupMetricSet, t: &ThresholdSet) -> GroupVerdicts {
    let rmse_group = Check::new(g.rmse_group, |v| v <= t.rmse_max);
    let nrmse_mean = Check::new(g.nrmse_group_mean, |v| v <= t.nrmse_max);
    let nrmse_range = Check::new(g.nrmse_group_range, |v| v <= t.nrmse_max);
    let error_checks = [("rmse_group", rmse_group), ("nrmse_mean", nrmse_mean), ("nrmse_range", nrmse_range)];
    let error_basis = error_checks
        .iter()
        .find(|(_, c)| c.verdict.passed())
        .map(|(name, _)| name.to_string());
    let rmse_or_nrmse = if error_basis.is_some() {
        Verdict::Pass
    } else if error_checks.iter().all(|(_, c)| c.verdict == Verdict::Unavailable) {
        Verdict::Unavailable
    } else {
        Verdict::Fail
    };
    let sd = Check::new(g.sd, |v| v <= t.sd_max);
    let cv = Check::new(g.cv, |v| v <= t.cv_max);
    GroupVerdicts {
        group: group.to_string(),
        overall: rmse_or_nrmse.passed() && sd.verdict.passed() && cv.verdict.passed(),
        rmse_group,
        nrmse_mean,
        nrmse_range,
        rmse_or_nrmse,
        error_basis,
        sd,
        cv,
    }
}

pub fn grade(units: &[UnitMetrics], groups: &[GroupMetrics], thresholds: &ThresholdSet, averaging: Interval) -> ComplianceReport {
    ComplianceReport {
        averaging,
        normative: averaging == Interval::Daily,
        thresholds: *thresholds,
        units: units
            .iter()
            .map(|u| grade_unit(&u.device_id, &u.group, &u.metrics, thresholds))
            .collect(),
        groups: groups.iter().map(|g| grade_group(&g.group, &g.metrics, thresholds)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub const NON_NORMATIVE_NOTE: &str =
    "Non-normative: the performance targets are defined for daily averages; verdicts on other averaging intervals are informational only.";

pub fn render_report(report: &ComplianceReport, format: ReportFormat, precision: usize) -> String {
    match format {
        ReportFormat::Json => render_json(report, precision),
        ReportFormat::Markdown => render_markdown(report, precision),
    }
}

fn render_json(report: &ComplianceReport, precision: usize) -> String {
    let mut r = report.clone();
    for u in &mut r.units {
        for c in [&mut u.r_squared, &mut u.slope, &mut u.intercept, &mut u.rmse] {
            *c = c.rounded(precision);
        }
    }
    for g in &mut r.groups {
        for c in [&mut g.rmse_group, &mut g.nrmse_mean, &mut g.nrmse_range, &mut g.sd, &mut g.cv] {
            *c = c.rounded(precision);
        }
    }
    let mut text = serde_json::to_string_pretty(&r).expect("report serializes");
    text.push('\n');
    text
}

fn cell(c: &Check, precision: usize) -> String {
    match c.value {
        Some(v) => format!("{} ({})", fmt_f64(v, precision), c.verdict.as_str()),
        None => c.verdict.as_str().to_string(),
    }
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn table(out: &mut String, columns: &[&str], rows: &[(String, String, Vec<String>)]) {
    let _ = writeln!(out, "| Metric | Guideline | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---|".repeat(columns.len()));
    for (metric, guideline, cells) in rows {
        let _ = writeln!(out, "| {metric} | {guideline} | {} |", cells.join(" | "));
    }
}

fn render_markdown(report: &ComplianceReport, precision: usize) -> String {
    let t = &report.thresholds;
    let mut out = String::new();
    let _ = writeln!(out, "# Sensor performance evaluation ({} averages)\n", report.averaging.as_str());
    if !report.normative {
        let _ = writeln!(out, "_{NON_NORMATIVE_NOTE}_\n");
    }

    if !report.units.is_empty() {
        let _ = writeln!(out, "## Units\n");
        let names: Vec<&str> = report.units.iter().map(|u| u.device_id.as_str()).collect();
        let col = |f: &dyn Fn(&UnitVerdicts) -> String| report.units.iter().map(f).collect::<Vec<_>>();
        let mut rows = vec![
            ("R²".to_string(), format!("≥ {}", t.r2_min), col(&|u| cell(&u.r_squared, precision))),
            ("Slope".into(), format!("{} to {}", t.slope_lo, t.slope_hi), col(&|u| cell(&u.slope, precision))),
            ("Intercept".into(), format!("−{0} ≤ b ≤ {0} µg/m³", t.intercept_abs_max), col(&|u| cell(&u.intercept, precision))),
        ];
        if report.units.iter().any(|u| u.rmse.value.is_some()) {
            rows.push(("RMSE (per unit, informational)".into(), format!("≤ {} µg/m³", t.rmse_max), col(&|u| cell(&u.rmse, precision))));
        }
        rows.push(("Overall".into(), "R², slope, intercept".into(), col(&|u| pass_fail(u.overall).to_string())));
        table(&mut out, &names, &rows);
        out.push('\n');
    }

    if !report.groups.is_empty() {
        let _ = writeln!(out, "## Groups\n");
        let names: Vec<&str> = report.groups.iter().map(|g| g.group.as_str()).collect();
        let col = |f: &dyn Fn(&GroupVerdicts) -> String| report.groups.iter().map(f).collect::<Vec<_>>();
        let rows = vec![
            ("RMSE_group".to_string(), format!("≤ {} µg/m³", t.rmse_max), col(&|g| cell(&g.rmse_group, precision))),
            ("NRMSE_mean".into(), format!("≤ {}%", t.nrmse_max), col(&|g| cell(&g.nrmse_mean, precision))),
            ("NRMSE_range".into(), format!("≤ {}%", t.nrmse_max), col(&|g| cell(&g.nrmse_range, precision))),
            (
                "RMSE or NRMSE".into(),
                "any of the above".into(),
                col(&|g| match &g.error_basis {
                    Some(basis) => format!("pass via {basis}"),
                    None => g.rmse_or_nrmse.as_str().to_string(),
                }),
            ),
            ("SD".into(), format!("≤ {} µg/m³", t.sd_max), col(&|g| cell(&g.sd, precision))),
            ("CV".into(), format!("≤ {}%", t.cv_max), col(&|g| cell(&g.cv, precision))),
            ("Overall".into(), "error, SD, CV".into(), col(&|g| pass_fail(g.overall).to_string())),
        ];
        table(&mut out, &names, &rows);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(slope: f64, intercept: f64, r2: f64) -> MetricSet {
        MetricSet {
            n: 30,
            slope: Some(slope),
            intercept: Some(intercept),
            r_squared: Some(r2),
            mae: 1.0,
            mbe: 0.0,
            rmse: 1.0,
            nrmse_mean: None,
            nrmse_range: None,
        }
    }

    fn group(rmse: f64, nm: f64, nr: f64, sd: f64, cv: f64) -> GroupMetricSet {
        GroupMetricSet {
            n_units: 3,
            n_cells: 90,
            n_periods: 30,
            rmse_group: Some(rmse),
            sd: Some(sd),
            cv: Some(cv),
            nrmse_group_mean: Some(nm),
            nrmse_group_range: Some(nr),
        }
    }

    #[test]
    fn boundaries_pass() {
        let t = ThresholdSet::default();
        for (slope, b) in [(1.35, 5.0), (0.65, -5.0)] {
            let v = grade_unit("u", "g", &unit(slope, b, 0.7), &t);
            assert!(v.overall, "{slope} {b}");
        }
        let g = grade_group("g", &group(7.0, 31.0, 31.0, 5.0, 30.0), &t);
        assert!(g.overall);
        assert_eq!(g.error_basis.as_deref(), Some("rmse_group"));
        let g = grade_group("g", &group(7.5, 31.0, 30.0, 5.0, 30.0), &t);
        assert_eq!(g.error_basis.as_deref(), Some("nrmse_range"));
    }

    #[test]
    fn published_examples() {
        let t = ThresholdSet::default();
        assert!(grade_unit("P1", "Plantower", &unit(1.28, 33.6, 0.9219), &t).slope.verdict.passed());
        let s1 = grade_unit("S1", "Sensirion", &unit(1.77, -25.47, 0.9569), &t);
        assert_eq!((s1.slope.verdict, s1.intercept.verdict), (Verdict::Fail, Verdict::Fail));
        let g = grade_group("Sensirion", &group(100.49, 74.76, 30.82, 7.47, 3.46), &t);
        assert_eq!((g.sd.verdict, g.cv.verdict), (Verdict::Fail, Verdict::Pass));
    }

    #[test]
    fn missing_metric_is_unavailable_and_fails_overall() {
        let mut m = unit(1.0, 0.0, 0.9);
        m.r_squared = None;
        let v = grade_unit("u", "g", &m, &ThresholdSet::default());
        assert_eq!(v.r_squared.verdict, Verdict::Unavailable);
        assert!(!v.overall);
    }

    #[test]
    fn overrides_and_validation() {
        let t = ThresholdSet::from_json_str(r#"{"sd_max": 8}"#).unwrap();
        assert_eq!(t.sd_max, 8.0);
        assert_eq!(t.cv_max, 30.0);
        assert!(ThresholdSet::from_json_str(r#"{"slope_lo": 2}"#).is_err());
        assert!(ThresholdSet::from_json_str(r#"{"cv_max": 0}"#).is_err());
        assert!(ThresholdSet::from_json_str(r#"{"typo": 1}"#).is_err());
    }

    #[test]
    fn markdown_omits_empty_groups_and_stamps_hourly() {
        let units = vec![UnitMetrics {
            device_id: "A".into(),
            group: "g".into(),
            metrics: unit(1.0, 0.0, 0.9),
        }];
        let report = grade(&units, &[], &ThresholdSet::default(), Interval::Hourly);
        let md = render_report(&report, ReportFormat::Markdown, 2);
        assert!(md.contains("## Units"));
        assert!(!md.contains("## Groups"));
        assert!(md.contains("Non-normative"));
        assert!(md.contains("| Slope | 0.65 to 1.35 | 1.00 (pass) |"));
        let daily = grade(&units, &[], &ThresholdSet::default(), Interval::Daily);
        assert!(!render_report(&daily, ReportFormat::Markdown, 2).contains("Non-normative"));
        let json: serde_json::Value = serde_json::from_str(&render_report(&daily, ReportFormat::Json, 2)).unwrap();
        assert_eq!(json["units"][0]["slope"]["verdict"], "pass");
        assert_eq!(json["normative"], true);
    }
}
