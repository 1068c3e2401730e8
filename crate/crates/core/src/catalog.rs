//! Sensor selection: filter a catalog of datasheet specs by technical and price criteria.

use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::{finish_csv, fmt_f64};

/// Datasheet summary of commonly used low-cost PM sensors.
pub const BUNDLED_CATALOG: &str = include_str!("../data/sensor_catalog.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightSource {
    Laser,
    Led,
    InfraredLed,
    Unknown,
}

impl LightSource {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], " ").as_str() {
            "laser" => LightSource::Laser,
            "led" => LightSource::Led,
            "infrared led" | "ir led" => LightSource::InfraredLed,
            _ => LightSource::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LightSource::Laser => "laser",
            LightSource::Led => "led",
            LightSource::InfraredLed => "infrared_led",
            LightSource::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorSpec {
    pub manufacturer: String,
    pub model: String,
    /// µg/m³
    pub pm_range_max: Option<f64>,
    /// percent
    pub rh_range_max: Option<f64>,
    pub light_source: LightSource,
    pub has_fan: bool,
    pub price_usd: f64,
}

fn optional_number(field: &str, what: &str, model: &str) -> Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("n/a") {
        return Ok(None);
    }
    f.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::InvalidArgument(format!("{model}: {what} '{f}' is not a number")))
}

fn parse_bool(field: &str, model: &str) -> Result<bool> {
    match field.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" | "true" | "1" => Ok(true),
        "no" | "n" | "false" | "0" => Ok(false),
        other => Err(Error::InvalidArgument(format!("{model}: has_fan '{other}' is not yes/no"))),
    }
}

const HEADER: [&str; 7] = ["manufacturer", "model", "pm_range_max", "rh_range_max", "light_source", "has_fan", "price_usd"];

/// Reads a catalog CSV with the bundled file's columns. "NA" or empty marks a
/// missing datasheet value.
pub fn read_catalog<R: Read>(reader: R) -> Result<Vec<SensorSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::MalformedHeader {
            expected: HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let model = row[1].to_string();
        let spec = SensorSpec {
            manufacturer: row[0].to_string(),
            pm_range_max: optional_number(&row[2], "pm_range_max", &model)?,
            rh_range_max: optional_number(&row[3], "rh_range_max", &model)?,
            light_source: LightSource::parse(&row[4]),
            has_fan: parse_bool(&row[5], &model)?,
            price_usd: optional_number(&row[6], "price_usd", &model)?
                .ok_or_else(|| Error::InvalidArgument(format!("{model}: price is required")))?,
            model,
        };
        spec.validate()?;
        out.push(spec);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("catalog has no sensors".into()));
    }
    Ok(out)
}

pub fn bundled_catalog() -> Vec<SensorSpec> {
    read_catalog(BUNDLED_CATALOG.as_bytes()).expect("bundled catalog is valid")
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pm_range_max.is_some_and(|v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!("{}: PM range must be positive", self.model)));
        }
        if self.rh_range_max.is_some_and(|v| !(v > 0.0 && v <= 100.0)) {
            return Err(Error::InvalidArgument(format!("{}: RH range must lie in (0, 100]", self.model)));
        }
        if !(self.price_usd >= 0.0) {
            return Err(Error::InvalidArgument(format!("{}: price must be non-negative", self.model)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionCriteria {
    pub require_fan: bool,
    pub require_laser: bool,
    pub min_pm_range: Option<f64>,
    pub min_rh_upper: Option<f64>,
    pub max_price_usd: Option<f64>,
    /// Models exempt from the price cap.
    pub price_exceptions: Vec<String>,
}

impl Default for SelectionCriteria {
    /// Technical criteria only; no price cap.
    fn default() -> Self {
        Self {
            require_fan: true,
            require_laser: true,
            min_pm_range: Some(1000.0),
            min_rh_upper: Some(90.0),
            max_price_usd: None,
            price_exceptions: Vec::new(),
        }
    }
}

impl SelectionCriteria {
    /// Every criterion disabled.
    pub fn none() -> Self {
        Self {
            require_fan: false,
            require_laser: false,
            min_pm_range: None,
            min_rh_upper: None,
            max_price_usd: None,
            price_exceptions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_pm_range", self.min_pm_range),
            ("min_rh_upper", self.min_rh_upper),
            ("max_price_usd", self.max_price_usd),
        ] {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Fan,
    Laser,
    PmRange,
    RhRange,
    Price,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Fan => "fan",
            Criterion::Laser => "laser",
            Criterion::PmRange => "pm_range",
            Criterion::RhRange => "rh_range",
            Criterion::Price => "price",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub criterion: Criterion,
    pub detail: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.criterion.as_str(), self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub sensor: SensorSpec,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub selected: Vec<SensorSpec>,
    pub rejected: Vec<Rejection>,
    /// Selected models that only passed through a price exception.
    pub price_exceptions_used: Vec<String>,
}

fn fmt_num(v: f64) -> String {
    v.to_string()
}

/// Every criterion the sensor fails, in a fixed order.
pub fn evaluate(sensor: &SensorSpec, c: &SelectionCriteria) -> (Vec<Failure>, bool) {
    let mut failures = Vec::new();
    let mut fail = |criterion, detail: String| failures.push(Failure { criterion, detail });
    if c.require_fan && !sensor.has_fan {
        fail(Criterion::Fan, "no fan".into());
    }
    if c.require_laser && sensor.light_source != LightSource::Laser {
        fail(Criterion::Laser, format!("light source is {}", sensor.light_source.as_str()));
    }
    if let Some(min) = c.min_pm_range {
        match sensor.pm_range_max {
            Some(v) if v >= min => {}
            Some(v) => fail(Criterion::PmRange, format!("{} < {}", fmt_num(v), fmt_num(min))),
            None => fail(Criterion::PmRange, "not stated".into()),
        }
    }
    if let Some(min) = c.min_rh_upper {
        match sensor.rh_range_max {
            Some(v) if v >= min => {}
            Some(v) => fail(Criterion::RhRange, format!("{} < {}", fmt_num(v), fmt_num(min))),
            None => fail(Criterion::RhRange, "not stated".into()),
        }
    }
    let mut excepted = false;
    if let Some(max) = c.max_price_usd {
        if sensor.price_usd > max {
            if c.price_exceptions.iter().any(|m| m == &sensor.model) {
                excepted = true;
            } else {
                fail(Criterion::Price, format!("{} > {}", fmt_num(sensor.price_usd), fmt_num(max)));
            }
        }
    }
    (failures, excepted)
}

pub fn select_sensors(catalog: &[SensorSpec], criteria: &SelectionCriteria) -> Result<Selection> {
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("catalog has no sensors".into()));
    }
    criteria.validate()?;
    let mut selection = Selection {
        selected: Vec::new(),
        rejected: Vec::new(),
        price_exceptions_used: Vec::new(),
    };
    for sensor in catalog {
        let (failures, excepted) = evaluate(sensor, criteria);
        if failures.is_empty() {
            if excepted {
                selection.price_exceptions_used.push(sensor.model.clone());
            }
            selection.selected.push(sensor.clone());
        } else {
            selection.rejected.push(Rejection {
                sensor: sensor.clone(),
                failures,
            });
        }
    }
    Ok(selection)
}

impl Selection {
    /// One row per catalog sensor in catalog order.
    pub fn to_csv(&self, catalog: &[SensorSpec], precision: usize) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["manufacturer", "model", "price_usd", "selected", "price_exception", "reasons"])?;
        for sensor in catalog {
            let rejection = self.rejected.iter().find(|r| r.sensor.model == sensor.model);
            let reasons = rejection
                .map(|r| r.failures.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))
                .unwrap_or_default();
            out.write_record([
                sensor.manufacturer.clone(),
                sensor.model.clone(),
                fmt_f64(sensor.price_usd, precision),
                rejection.is_none().to_string(),
                self.price_exceptions_used.contains(&sensor.model).to_string(),
                reasons,
            ])?;
        }
        finish_csv(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models(specs: &[SensorSpec]) -> Vec<&str> {
        specs.iter().map(|s| s.model.as_str()).collect()
    }

    #[test]
    fn bundled_catalog_parses() {
        let c = bundled_catalog();
        assert_eq!(c.len(), 11);
        let gp2 = c.iter().find(|s| s.model == "GP2Y101AU0F").unwrap();
        assert_eq!(gp2.light_source, LightSource::InfraredLed);
        assert_eq!(gp2.rh_range_max, None);
        assert_eq!(c.iter().find(|s| s.model == "PPD71").unwrap().price_usd, 13.5);
    }

    #[test]
    fn technical_criteria_select_seven() {
        let c = bundled_catalog();
        let s = select_sensors(&c, &SelectionCriteria::default()).unwrap();
        assert_eq!(
            models(&s.selected),
            ["PMS7003", "SPS30", "HPMA115S0", "HPMA115C0-004", "OPC-N2", "OPC-N3", "PA-II-SD"]
        );
        let sds = s.rejected.iter().find(|r| r.sensor.model == "SDS011").unwrap();
        let crit: Vec<_> = sds.failures.iter().map(|f| f.criterion).collect();
        assert_eq!(crit, [Criterion::PmRange, Criterion::RhRange]);
        let b5w = s.rejected.iter().find(|r| r.sensor.model == "B5W-LD0101").unwrap();
        assert_eq!(b5w.failures.len(), 4);
    }

    #[test]
    fn disabled_criteria_select_everything() {
        let c = bundled_catalog();
        let s = select_sensors(&c, &SelectionCriteria::none()).unwrap();
        assert_eq!(s.selected.len(), c.len());
        assert!(s.rejected.is_empty());
    }

    #[test]
    fn price_cap_and_exceptions() {
        let c = bundled_catalog();
        let criteria = SelectionCriteria {
            max_price_usd: Some(50.0),
            price_exceptions: vec!["SPS30".into(), "HPMA115C0-004".into()],
            ..Default::default()
        };
        let s = select_sensors(&c, &criteria).unwrap();
        assert_eq!(models(&s.selected), ["PMS7003", "SPS30", "HPMA115C0-004"]);
        assert_eq!(s.price_exceptions_used, ["SPS30", "HPMA115C0-004"]);
    }

    #[test]
    fn csv_lists_reasons() {
        let c = bundled_catalog();
        let s = select_sensors(&c, &SelectionCriteria::default()).unwrap();
        let text = s.to_csv(&c, 2).unwrap();
        assert!(text.contains("Nova,SDS011,25.00,false,false,pm_range: 999 < 1000; rh_range: 70 < 90\n"));
        assert!(text.contains("Plantower,PMS7003,24.00,true,false,\n"));
    }
}
