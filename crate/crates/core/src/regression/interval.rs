use serde::Serialize;

use super::fit::RegressionFit;
use crate::error::{Error, Result};
use crate::output::{finish_csv, fmt_f64};
use crate::stats;

/// An interval on the fit's transformed scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalEstimate {
    /// Predictor as supplied, in µg/m³.
    pub x_raw: f64,
    /// Predictor on the fit's scale.
    pub x_o: f64,
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pi_lo: f64,
    pub pi_hi: f64,
    pub confidence: f64,
}

fn band(fit: &RegressionFit, x_o: f64, confidence: f64, extra: f64) -> Result<Band> {
    fit.validate()?;
    if !x_o.is_finite() {
        return Err(Error::InvalidArgument(format!("query point {x_o} is not finite")));
    }
    let t = stats::t_quantile(confidence, (fit.n - 2) as f64)?;
    let n = fit.n as f64;
    let d = x_o - fit.x_bar;
    let half = t * (fit.mse * (extra + 1.0 / n + d * d / fit.s_xx)).sqrt();
    let point = fit.predict(x_o);
    Ok(Band {
        point,
        lo: point - half,
        hi: point + half,
    })
}

/// Interval for the mean response at `x_o`.
pub fn confidence_interval(fit: &RegressionFit, x_o: f64, confidence: f64) -> Result<Band> {
    band(fit, x_o, confidence, 0.0)
}

/// Interval for a single new observation at `x_o`.
pub fn prediction_interval(fit: &RegressionFit, x_o: f64, confidence: f64) -> Result<Band> {
    band(fit, x_o, confidence, 1.0)
}

/// Point estimate and both intervals for a raw reading, in raw units.
pub fn estimate(fit: &RegressionFit, x_raw: f64, confidence: f64) -> Result<IntervalEstimate> {
    let x_o = fit.transform_predictor(x_raw)?;
    let ci = confidence_interval(fit, x_o, confidence)?;
    let pi = prediction_interval(fit, x_o, confidence)?;
    let back = |v| fit.back_transform(v);
    Ok(IntervalEstimate {
        x_raw,
        x_o,
        point: back(ci.point),
        ci_lo: back(ci.lo),
        ci_hi: back(ci.hi),
        pi_lo: back(pi.lo),
        pi_hi: back(pi.hi),
        confidence,
    })
}

pub fn intervals_csv(rows: &[IntervalEstimate], precision: usize) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["x_raw", "point", "ci_lo", "ci_hi", "pi_lo", "pi_hi"])?;
    for r in rows {
        out.write_record([r.x_raw, r.point, r.ci_lo, r.ci_hi, r.pi_lo, r.pi_hi].map(|v| fmt_f64(v, precision)))?;
    }
    finish_csv(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{Orientation, Transform};
    use approx::assert_abs_diff_eq;

    fn published() -> RegressionFit {
        RegressionFit::from_summary(
            Transform::LogLog,
            Orientation::ReferenceOnSensor,
            0.8259,
            0.4058,
            978,
            4.366082523,
            326.1566,
            0.02793705,
        )
        .unwrap()
    }

    #[test]
    fn worked_example() {
        let fit = published();
        let x_o = 147f64.ln();
        let pi = prediction_interval(&fit, x_o, 0.95).unwrap();
        assert_abs_diff_eq!(pi.lo, 4.19903208, epsilon = 1e-6);
        assert_abs_diff_eq!(pi.hi, 4.85576446, epsilon = 1e-6);
        let e = estimate(&fit, 147.0, 0.95).unwrap();
        assert_abs_diff_eq!(e.ci_lo, 91.09, epsilon = 0.05);
        assert_abs_diff_eq!(e.ci_hi, 93.95, epsilon = 0.05);
        assert_abs_diff_eq!(e.pi_lo, 66.62, epsilon = 0.05);
        assert_abs_diff_eq!(e.pi_hi, 4.85576446f64.exp(), epsilon = 1e-3);
        assert!(e.pi_lo < e.ci_lo && e.ci_lo < e.point && e.point < e.ci_hi && e.ci_hi < e.pi_hi);
    }

    #[test]
    fn narrowest_at_mean() {
        let fit = published();
        let ci = confidence_interval(&fit, fit.x_bar, 0.95).unwrap();
        let t = stats::t_quantile(0.95, 976.0).unwrap();
        assert_abs_diff_eq!(ci.hi - ci.lo, 2.0 * t * (fit.mse / 978.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn zero_mse_collapses_to_point() {
        let fit = RegressionFit::from_summary(Transform::None, Orientation::SensorOnReference, 2.0, 1.0, 10, 3.0, 8.0, 0.0).unwrap();
        let pi = prediction_interval(&fit, 5.0, 0.95).unwrap();
        assert_eq!((pi.lo, pi.point, pi.hi), (11.0, 11.0, 11.0));
    }

    #[test]
    fn log_fit_rejects_non_positive_reading() {
        assert!(matches!(estimate(&published(), 0.0, 0.95), Err(Error::NonPositiveValue { .. })));
    }

    #[test]
    fn csv_layout() {
        let e = estimate(&published(), 147.0, 0.95).unwrap();
        let text = intervals_csv(&[e], 2).unwrap();
        assert!(text.starts_with("x_raw,point,ci_lo,ci_hi,pi_lo,pi_hi\n147.00,92.5"));
    }
}
