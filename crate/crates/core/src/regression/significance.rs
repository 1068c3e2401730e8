use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};
use crate::stats;

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LcsOnly,
    LcsPlusRh,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    /// Intercept first, then one coefficient per regressor.
    pub coefficients: Vec<f64>,
    /// Standard errors of the regressor coefficients (intercept excluded).
    pub slope_std_errors: Vec<f64>,
    pub r_squared: f64,
    pub mse: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceResult {
    pub n: usize,
    pub lcs_only: ModelSummary,
    pub lcs_plus_rh: ModelSummary,
    pub rh_coefficient: f64,
    pub rh_std_error: f64,
    pub t_statistic: f64,
    pub p_value_rh: f64,
    pub significant: bool,
}

/// Least squares on centered regressors. Returns the slopes, the inverse of the
/// centered normal matrix, and the fitted intercept.
fn least_squares(regressors: &[&[f64]], y: &[f64]) -> Result<ModelFit> {
    let n = y.len();
    let k = regressors.len();
    let means: Vec<f64> = regressors.iter().map(|r| numeric::sum(r.iter().copied()) / n as f64).collect();
    let y_bar = numeric::sum(y.iter().copied()) / n as f64;

    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for i in 0..k {
        for j in i..k {
            let mut s = CompensatedSum::new();
            for t in 0..n {
                s.add((regressors[i][t] - means[i]) * (regressors[j][t] - means[j]));
            }
            xtx[i][j] = s.value();
            xtx[j][i] = s.value();
        }
        let mut s = CompensatedSum::new();
        for t in 0..n {
            s.add((regressors[i][t] - means[i]) * (y[t] - y_bar));
        }
        xty[i] = s.value();
    }
    let inv = invert(&xtx)?;
    let slopes: Vec<f64> = (0..k).map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum()).collect();
    let intercept = y_bar - slopes.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();

    let (mut sse, mut sst) = (CompensatedSum::new(), CompensatedSum::new());
    for t in 0..n {
        let fitted = intercept + (0..k).map(|i| slopes[i] * regressors[i][t]).sum::<f64>();
        sse.add((y[t] - fitted).powi(2));
        sst.add((y[t] - y_bar).powi(2));
    }
    if sst.value() <= 0.0 {
        return Err(Error::ConstantSeries);
    }
    let df = n - k - 1;
    let mse = sse.value() / df as f64;
    Ok(ModelFit {
        intercept,
        slopes,
        inv,
        mse,
        df,
        r_squared: (1.0 - sse.value() / sst.value()).clamp(0.0, 1.0),
    })
}

struct ModelFit {
    intercept: f64,
    slopes: Vec<f64>,
    inv: Vec<Vec<f64>>,
    mse: f64,
    df: usize,
    r_squared: f64,
}

impl ModelFit {
    fn summary(&self, model: ModelKind) -> ModelSummary {
        let mut coefficients = vec![self.intercept];
        coefficients.extend(&self.slopes);
        ModelSummary {
            model,
            coefficients,
            slope_std_errors: (0..self.slopes.len()).map(|i| (self.mse * self.inv[i][i]).sqrt()).collect(),
            r_squared: self.r_squared,
            mse: self.mse,
            df: self.df,
        }
    }
}

/// Gauss-Jordan with partial pivoting. A pivot that has collapsed relative to
/// its column's original scale means the regressors are (nearly) collinear.
fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = a.len();
    let scale: Vec<f64> = (0..k).map(|i| a[i][i]).collect();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..k {
        let pivot_row = (col..k)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .expect("non-empty");
        m.swap(col, pivot_row);
        let pivot = m[col][col];
        if !(pivot.abs() > 1e-10 * scale[col].abs()) || scale[col] <= 0.0 {
            return Err(Error::Collinear(format!("regressor {col} is constant or a linear combination of the others")));
        }
        for v in m[col].iter_mut() {
            *v /= pivot;
        }
        for row in 0..k {
            if row != col {
                let factor = m[row][col];
                if factor != 0.0 {
                    for j in 0..2 * k {
                        m[row][j] -= factor * m[col][j];
                    }
                }
            }
        }
    }
    Ok(m.into_iter().map(|r| r[k..].to_vec()).collect())
}

/// Compares `reference ~ 1 + sensor` against `reference ~ 1 + sensor + RH` and
/// t-tests the humidity coefficient.
pub fn humidity_significance(x: &[f64], y: &[f64], rh: &[f64]) -> Result<SignificanceResult> {
    if x.len() != y.len() || x.len() != rh.len() {
        return Err(Error::LengthMismatch {
            x: x.len(),
            y: y.len().min(rh.len()),
        });
    }
    let n = x.len();
    if n < 5 {
        return Err(Error::InsufficientData { needed: 5, got: n });
    }
    if ![x, y, rh].iter().all(|s| s.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidArgument("series contain non-finite values".into()));
    }
    let base = least_squares(&[x], y).map_err(|e| match e {
        Error::Collinear(_) => Error::DegenerateRegressor,
        other => other,
    })?;
    let full = least_squares(&[x, rh], y)?;

    let rh_coefficient = full.slopes[1];
    let rh_std_error = (full.mse * full.inv[1][1]).sqrt();
    let (t_statistic, p_value_rh) = if rh_std_error > 0.0 {
        let t = rh_coefficient / rh_std_error;
        (t, stats::t_two_sided_p(t, full.df as f64))
    } else if rh_coefficient == 0.0 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY.copysign(rh_coefficient), 0.0)
    };
    let mut lcs_plus_rh = full.summary(ModelKind::LcsPlusRh);
    // Nested least squares: numerically the larger model may land a hair below.
    lcs_plus_rh.r_squared = lcs_plus_rh.r_squared.max(base.r_squared);
    Ok(SignificanceResult {
        n,
        lcs_only: base.summary(ModelKind::LcsOnly),
        lcs_plus_rh,
        rh_coefficient,
        rh_std_error,
        t_statistic,
        p_value_rh,
        significant: p_value_rh <= ALPHA,
    })
}

impl SignificanceResult {
    pub fn to_csv(&self, precision: usize) -> Result<String> {
        use crate::output::{finish_csv, fmt_f64};
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["model", "n", "intercept", "b_sensor", "b_rh", "r_squared", "mse", "p_value_rh", "significant"])?;
        for m in [&self.lcs_only, &self.lcs_plus_rh] {
            let (name, b_rh, p, sig) = match m.model {
                ModelKind::LcsOnly => ("lcs_only", String::new(), String::new(), String::new()),
                ModelKind::LcsPlusRh => (
                    "lcs_plus_rh",
                    fmt_f64(m.coefficients[2], precision),
                    fmt_f64(self.p_value_rh, precision),
                    self.significant.to_string(),
                ),
            };
            out.write_record([
                name.to_string(),
                self.n.to_string(),
                fmt_f64(m.coefficients[0], precision),
                fmt_f64(m.coefficients[1], precision),
                b_rh,
                fmt_f64(m.r_squared, precision),
                fmt_f64(m.mse, precision),
                p,
                sig,
            ])?;
        }
        finish_csv(out)
    }
}
