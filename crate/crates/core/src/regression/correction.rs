use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{self, PairedSeries};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionEval {
    pub seed: u64,
    pub split: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Shuffled index order used to split `n` points. Exposed so callers can
/// reproduce the partition.
pub fn split_indices(n: usize, split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidArgument(format!("split {split} must lie in (0, 1)")));
    }
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    let n_train = (split * n as f64).round() as usize;
    if n_train < 3 || n - n_train < 3 {
        return Err(Error::InvalidArgument(format!(
            "split {split} of {n} points leaves fewer than 3 on one side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_train);
    Ok((order, test))
}

/// Fits `reference = intercept + slope * sensor` on a seeded random training
/// share and scores it on the held-out points.
pub fn linear_correction_eval(x: &[f64], y: &[f64], split: f64, seed: u64) -> Result<CorrectionEval> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { x: x.len(), y: y.len() });
    }
    let (train, test) = split_indices(x.len(), split, seed)?;
    let pick = |idx: &[usize], v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();

    // PairedSeries regresses y on x, so the sensor goes in x here.
    let fit_pairs = PairedSeries::new(pick(&train, x), pick(&train, y))?;
    let (slope, intercept) = metrics::ols_slope_intercept(&fit_pairs)?;

    let truth = pick(&test, y);
    let predicted: Vec<f64> = pick(&test, x).iter().map(|v| intercept + slope * v).collect();
    let scored = PairedSeries::new(truth, predicted)?;
    Ok(CorrectionEval {
        seed,
        split,
        n_train: train.len(),
        n_test: test.len(),
        slope,
        intercept,
        r_squared: metrics::r_squared(&scored)?,
        mae: metrics::mae(&scored),
        rmse: metrics::rmse_single(&scored),
    })
}

impl CorrectionEval {
    pub fn to_csv(&self, precision: usize) -> Result<String> {
        use crate::output::{finish_csv, fmt_f64};
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["seed", "split", "n_train", "n_test", "slope", "intercept", "r_squared", "mae", "rmse"])?;
        out.write_record([
            self.seed.to_string(),
            fmt_f64(self.split, precision),
            self.n_train.to_string(),
            self.n_test.to_string(),
            fmt_f64(self.slope, precision),
            fmt_f64(self.intercept, precision),
            fmt_f64(self.r_squared, precision),
            fmt_f64(self.mae, precision),
            fmt_f64(self.rmse, precision),
        ])?;
        finish_csv(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_scores_perfectly() {
        let x: Vec<f64> = (1..=50).map(|i| i as f64 * 1.7).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        for (split, seed) in [(0.8, 0), (0.5, 42), (0.3, 9)] {
            let r = linear_correction_eval(&x, &y, split, seed).unwrap();
            assert!((r.r_squared - 1.0).abs() < 1e-12);
            assert!(r.mae < 1e-12 && r.rmse < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 23) as f64 + 1.0).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 0.7 * v + (i % 5) as f64).collect();
        let a = linear_correction_eval(&x, &y, 0.8, 11).unwrap();
        assert_eq!(a, linear_correction_eval(&x, &y, 0.8, 11).unwrap());
        assert_eq!((a.n_train, a.n_test), (32, 8));
        let (train, test) = split_indices(40, 0.8, 11).unwrap();
        let mut all: Vec<_> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_split() {
        let v: Vec<f64> = (0..12).map(f64::from).collect();
        assert!(linear_correction_eval(&v, &v, 1.0, 0).is_err());
        assert!(linear_correction_eval(&v, &v, 0.95, 0).is_err());
        assert!(linear_correction_eval(&v[..9], &v[..9], 0.5, 0).is_err());
    }
}
