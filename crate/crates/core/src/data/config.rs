use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_base_minutes() -> u32 {
    15
}

fn default_completeness() -> f64 {
    0.75
}

/// Which device is the reference and how the test units are grouped by model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub reference_id: String,
    /// Sensor model name -> ordered unit identifiers.
    pub groups: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_base_minutes")]
    pub averaging_base_minutes: u32,
    #[serde(default)]
    pub timezone_offset_minutes: i32,
    /// Fraction of expected samples a period needs before it is populated.
    #[serde(default = "default_completeness")]
    pub completeness: f64,
}

impl DeploymentConfig {
    pub fn new(reference_id: impl Into<String>, groups: BTreeMap<String, Vec<String>>) -> Self {
        Self {
            reference_id: reference_id.into(),
            groups,
            averaging_base_minutes: default_base_minutes(),
            timezone_offset_minutes: 0,
            completeness: default_completeness(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reference_id.is_empty() {
            return Err(Error::InvalidConfig("reference_id is empty".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::InvalidConfig("no sensor groups".into()));
        }
        let mut seen = BTreeSet::new();
        for (name, units) in &self.groups {
            if units.is_empty() {
                return Err(Error::InvalidConfig(format!("group `{name}` is empty")));
            }
            for unit in units {
                if *unit == self.reference_id {
                    return Err(Error::InvalidConfig(format!(
                        "reference `{unit}` is listed in group `{name}`"
                    )));
                }
                if !seen.insert(unit.as_str()) {
                    return Err(Error::InvalidConfig(format!(
                        "unit `{unit}` appears more than once"
                    )));
                }
            }
        }
        if self.averaging_base_minutes == 0 || 60 % self.averaging_base_minutes != 0 {
            return Err(Error::InvalidConfig(format!(
                "averaging_base_minutes must divide 60, got {}",
                self.averaging_base_minutes
            )));
        }
        if self.timezone_offset_minutes.abs() >= 24 * 60 {
            return Err(Error::InvalidConfig("timezone offset out of range".into()));
        }
        if !(self.completeness > 0.0 && self.completeness <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "completeness must be in (0, 1], got {}",
                self.completeness
            )));
        }
        Ok(())
    }

    /// Reference first, then every unit in group order.
    pub fn device_order(&self) -> Vec<String> {
        std::iter::once(self.reference_id.clone())
            .chain(self.groups.values().flatten().cloned())
            .collect()
    }

    pub fn units(&self) -> impl Iterator<Item = &str> {
        self.groups.values().flatten().map(String::as_str)
    }

    pub fn knows(&self, device_id: &str) -> bool {
        device_id == self.reference_id || self.units().any(|u| u == device_id)
    }

    pub fn group_of(&self, unit: &str) -> Option<&str> {
        self.groups
            .iter()
            .find(|(_, units)| units.iter().any(|u| u == unit))
            .map(|(name, _)| name.as_str())
    }

    pub(crate) fn base_samples_per_hour(&self) -> u32 {
        60 / self.averaging_base_minutes
    }
}
