use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PairedSeries;
use crate::numeric::{self, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    /// Natural log of both predictor and response.
    LogLog,
}

/// Which variable is regressed on which. Both directions are used in practice:
/// sensor-on-reference for the accuracy metrics, reference-on-sensor when a field
/// reading is turned into an estimate of the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    ReferenceOnSensor,
    SensorOnReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierPolicy {
    /// Points with |standardized residual| at or above this are removed.
    pub threshold: f64,
    /// Repeat removal and re-fit until nothing more is removed.
    pub iterate: bool,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            iterate: false,
        }
    }
}

/// A fitted straight line plus the sufficient statistics interval estimates need.
/// All quantities live on the transformed scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub transform: Transform,
    pub orientation: Orientation,
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    pub x_bar: f64,
    pub s_xx: f64,
    pub mse: f64,
    /// Residuals of the retained points under the final fit.
    #[serde(default)]
    pub residuals: Vec<f64>,
    /// Residual / sqrt(MSE) under the final fit.
    #[serde(default)]
    pub standardized_residuals: Vec<f64>,
    /// Input indices dropped as outliers.
    #[serde(default)]
    pub removed_outlier_indices: Vec<usize>,
}

struct Line {
    slope: f64,
    intercept: f64,
    x_bar: f64,
    s_xx: f64,
    mse: f64,
    residuals: Vec<f64>,
    standardized: Vec<f64>,
}

fn ols(x: &[f64], y: &[f64]) -> Result<Line> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::DegenerateRegressor);
    }
    let x_bar = numeric::sum(x.iter().copied()) / n as f64;
    let y_bar = numeric::sum(y.iter().copied()) / n as f64;
    let (mut sxx, mut sxy) = (CompensatedSum::new(), CompensatedSum::new());
    for (&xi, &yi) in x.iter().zip(y) {
        sxx.add((xi - x_bar) * (xi - x_bar));
        sxy.add((xi - x_bar) * (yi - y_bar));
    }
    let s_xx = sxx.value();
    if s_xx <= 0.0 {
        return Err(Error::DegenerateRegressor);
    }
    let slope = sxy.value() / s_xx;
    let intercept = y_bar - slope * x_bar;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| yi - (intercept + slope * xi)).collect();
    let mse = numeric::sum(residuals.iter().map(|e| e * e)) / (n - 2) as f64;

    // A residual scale at rounding level means an exact fit; every point sits on
    // the line.
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let sigma = mse.sqrt();
    let standardized = if sigma <= 1e-12 * scale {
        vec![0.0; n]
    } else {
        residuals.iter().map(|e| e / sigma).collect()
    };
    Ok(Line {
        slope,
        intercept,
        x_bar,
        s_xx,
        mse,
        residuals,
        standardized,
    })
}

fn apply_transform(values: &[f64], transform: Transform) -> Result<Vec<f64>> {
    match transform {
        Transform::None => Ok(values.to_vec()),
        Transform::LogLog => values
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value > 0.0 {
                    Ok(value.ln())
                } else {
                    Err(Error::NonPositiveValue { index, value })
                }
            })
            .collect(),
    }
}

/// Fits `response = intercept + slope * predictor` on the transformed scale, with
/// optional outlier removal by standardized residual.
///
/// Without `iterate`, removal is a single pass followed by one re-fit.
pub fn fit(
    predictor: &[f64],
    response: &[f64],
    transform: Transform,
    orientation: Orientation,
    outliers: Option<OutlierPolicy>,
) -> Result<RegressionFit> {
    if predictor.len() != response.len() {
        return Err(Error::LengthMismatch {
            x: predictor.len(),
            y: response.len(),
        });
    }
    let x = apply_transform(predictor, transform)?;
    let y = apply_transform(response, transform)?;

    let mut retained: Vec<usize> = (0..x.len()).collect();
    let mut removed = Vec::new();
    let mut line = ols(&x, &y)?;
    if let Some(policy) = outliers {
        loop {
            let (keep, drop): (Vec<_>, Vec<_>) = retained
                .iter()
                .zip(&line.standardized)
                .partition(|(_, z)| z.abs() < policy.threshold);
            if drop.is_empty() {
                break;
            }
            removed.extend(drop.into_iter().map(|(&i, _)| i));
            retained = keep.into_iter().map(|(&i, _)| i).collect();
            let xs: Vec<f64> = retained.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = retained.iter().map(|&i| y[i]).collect();
            line = ols(&xs, &ys)?;
            if !policy.iterate {
                break;
            }
        }
    }
    removed.sort_unstable();

    Ok(RegressionFit {
        transform,
        orientation,
        slope: line.slope,
        intercept: line.intercept,
        n: retained.len(),
        x_bar: line.x_bar,
        s_xx: line.s_xx,
        mse: line.mse,
        residuals: line.residuals,
        standardized_residuals: line.standardized,
        removed_outlier_indices: removed,
    })
}

/// Log-log calibration of reference on sensor with a single 3σ outlier pass.
pub fn fit_loglog_with_outlier_removal(p: &PairedSeries) -> Result<RegressionFit> {
    if p.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: p.len() });
    }
    fit(
        p.y(),
        p.x(),
        Transform::LogLog,
        Orientation::ReferenceOnSensor,
        Some(OutlierPolicy::default()),
    )
}

impl RegressionFit {
    /// A fit known only by its summary statistics (e.g. a published model).
    #[allow(clippy::too_many_arguments)]
    pub fn from_summary(
        transform: Transform,
        orientation: Orientation,
        slope: f64,
        intercept: f64,
        n: usize,
        x_bar: f64,
        s_xx: f64,
        mse: f64,
    ) -> Result<Self> {
        let fit = Self {
            transform,
            orientation,
            slope,
            intercept,
            n,
            x_bar,
            s_xx,
            mse,
            residuals: Vec::new(),
            standardized_residuals: Vec::new(),
            removed_outlier_indices: Vec::new(),
        };
        fit.validate()?;
        Ok(fit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InsufficientData { needed: 3, got: self.n });
        }
        if !(self.s_xx > 0.0) {
            return Err(Error::DegenerateRegressor);
        }
        if !(self.mse >= 0.0) || ![self.slope, self.intercept, self.x_bar, self.mse].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("fit statistics must be finite with MSE >= 0".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fit: Self = serde_json::from_str(text)?;
        fit.validate()?;
        Ok(fit)
    }

    /// Maps a raw predictor reading onto the fit's scale.
    pub fn transform_predictor(&self, raw: f64) -> Result<f64> {
        match self.transform {
            Transform::None => Ok(raw),
            Transform::LogLog if raw > 0.0 => Ok(raw.ln()),
            Transform::LogLog => Err(Error::NonPositiveValue { index: 0, value: raw }),
        }
    }

    /// Maps a response on the fit's scale back to raw units.
    pub fn back_transform(&self, value: f64) -> f64 {
        match self.transform {
            Transform::None => value,
            Transform::LogLog => value.exp(),
        }
    }

    pub fn predict(&self, x_o: f64) -> f64 {
        self.intercept + self.slope * x_o
    }
}
