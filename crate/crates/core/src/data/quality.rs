use chrono::{DateTime, Utc};
use serde::Serialize;

use super::AlignedPanel;
use crate::error::{Error, Result};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    SaturationPlateau,
    GroupDrift,
    Gap,
}

impl FlagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::SaturationPlateau => "saturation_plateau",
            FlagKind::GroupDrift => "group_drift",
            FlagKind::Gap => "gap",
        }
    }
}

/// A data-quality finding over `[start, end)` of one device's series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityFlag {
    pub device_id: String,
    pub kind: FlagKind,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub detail: String,
}

impl QualityFlag {
    fn over(panel: &AlignedPanel, device_id: &str, kind: FlagKind, first: usize, last: usize, detail: String) -> Self {
        let step = chrono::Duration::seconds(panel.interval().step_seconds());
        Self {
            device_id: device_id.to_string(),
            kind,
            start: panel.grid()[first],
            end: panel.grid()[last] + step,
            detail,
        }
    }
}

pub fn quality_csv(flags: &[QualityFlag]) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["device_id", "kind", "start", "end", "detail"])?;
    for f in flags {
        out.write_record([
            f.device_id.clone(),
            f.kind.as_str().to_string(),
            f.start.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            f.end.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            f.detail.clone(),
        ])?;
    }
    crate::output::finish_csv(out)
}

/// Maximal runs of `predicate` over `0..len` as inclusive `(first, last)` pairs.
fn runs(len: usize, mut predicate: impl FnMut(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for i in 0..len {
        match (predicate(i), open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push((s, len - 1));
    }
    out
}

/// Flags plateaus where the device sits at its ceiling for `min_run` or more
/// consecutive populated cells.
///
/// The ceiling is the device's observed maximum unless `ceiling` is given, in which
/// case any cell at or above it counts.
pub fn detect_saturation(
    panel: &AlignedPanel,
    device_id: &str,
    min_run: usize,
    ceiling: Option<f64>,
) -> Result<Vec<QualityFlag>> {
    if min_run < 2 {
        return Err(Error::InvalidArgument(format!("min_run must be >= 2, got {min_run}")));
    }
    let column = panel.column(device_id)?;
    let observed_max = column.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if observed_max == f64::NEG_INFINITY {
        return Ok(Vec::new());
    }
    let target = ceiling.unwrap_or(observed_max);
    Ok(runs(column.len(), |i| column[i].is_some_and(|v| v >= target))
        .into_iter()
        .filter(|(s, e)| e - s + 1 >= min_run)
        .map(|(s, e)| {
            QualityFlag::over(
                panel,
                device_id,
                FlagKind::SaturationPlateau,
                s,
                e,
                format!("{} consecutive periods at >= {target} µg/m³", e - s + 1),
            )
        })
        .collect())
}

/// Flags units whose windowed mean falls below `ratio_threshold` times the mean of
/// their siblings' means over the same window. Only cells where every group unit is
/// populated enter a window; overlapping flagged windows merge into one flag.
pub fn group_drift_screen(
    panel: &AlignedPanel,
    group: &[String],
    window_periods: usize,
    ratio_threshold: f64,
) -> Result<Vec<QualityFlag>> {
    if group.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: group.len(),
        });
    }
    if window_periods == 0 {
        return Err(Error::InvalidArgument("window_periods must be >= 1".into()));
    }
    let columns = group
        .iter()
        .map(|id| panel.column(id))
        .collect::<Result<Vec<_>>>()?;
    let len = panel.len();
    if len < window_periods {
        return Ok(Vec::new());
    }
    let complete: Vec<bool> = (0..len)
        .map(|i| columns.iter().all(|c| c[i].is_some()))
        .collect();

    let mut flags = Vec::new();
    for (u, unit) in group.iter().enumerate() {
        // Per window start: ratio when flagged.
        let mut flagged: Vec<Option<f64>> = vec![None; len];
        for start in 0..=len - window_periods {
            let cells: Vec<usize> = (start..start + window_periods).filter(|&i| complete[i]).collect();
            if cells.is_empty() {
                continue;
            }
            let mean_of = |c: usize| numeric::mean(cells.iter().map(|&i| columns[c][i].unwrap())).unwrap();
            let own = mean_of(u);
            let siblings = numeric::mean((0..group.len()).filter(|&c| c != u).map(mean_of)).unwrap();
            if own < ratio_threshold * siblings {
                let ratio = if siblings > 0.0 { own / siblings } else { 0.0 };
                for slot in &mut flagged[start..start + window_periods] {
                    *slot = Some(slot.map_or(ratio, |r: f64| r.min(ratio)));
                }
            }
        }
        for (s, e) in runs(len, |i| flagged[i].is_some()) {
            let worst = flagged[s..=e].iter().flatten().copied().fold(f64::INFINITY, f64::min);
            flags.push(QualityFlag::over(
                panel,
                unit,
                FlagKind::GroupDrift,
                s,
                e,
                format!("mean ratio to siblings as low as {worst:.4} (threshold {ratio_threshold})"),
            ));
        }
    }
    Ok(flags)
}

/// Maximal runs of missing cells for one device.
pub fn gap_flags(panel: &AlignedPanel, device_id: &str) -> Result<Vec<QualityFlag>> {
    let column = panel.column(device_id)?;
    Ok(runs(column.len(), |i| column[i].is_none())
        .into_iter()
        .map(|(s, e)| {
            QualityFlag::over(
                panel,
                device_id,
                FlagKind::Gap,
                s,
                e,
                format!("{} missing periods", e - s + 1),
            )
        })
        .collect())
}
