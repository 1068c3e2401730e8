//! Fixed-precision number formatting shared by every CSV/JSON/Markdown writer.

pub const DEFAULT_PRECISION: usize = 4;

/// Formats with `precision` decimals; negative zero prints as zero.
pub fn fmt_f64(value: f64, precision: usize) -> String {
    let s = format!("{value:.precision$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Empty string for `None`.
pub fn fmt_opt(value: Option<f64>, precision: usize) -> String {
    value.map(|v| fmt_f64(v, precision)).unwrap_or_default()
}

/// Rounds for JSON output so documents carry the same precision as the CSVs.
pub fn round_to(value: f64, precision: usize) -> f64 {
    fmt_f64(value, precision).parse().unwrap_or(value)
}

pub fn round_opt(value: Option<f64>, precision: usize) -> Option<f64> {
    value.map(|v| round_to(v, precision))
}

/// Flushes an in-memory CSV writer into a string.
pub(crate) fn finish_csv(out: csv::Writer<Vec<u8>>) -> crate::Result<String> {
    let bytes = out
        .into_inner()
        .map_err(|e| crate::Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_zero_is_normalised() {
        assert_eq!(fmt_f64(-0.00001, 4), "0.0000");
        assert_eq!(fmt_f64(-0.5, 1), "-0.5");
        assert_eq!(fmt_f64(25.7822, 2), "25.78");
    }

    #[test]
    fn rounding_and_options() {
        assert_eq!(round_to(1.23456, 2), 1.23);
        assert_eq!(fmt_opt(None, 3), "");
        assert_eq!(round_opt(Some(2.0 / 3.0), 4), Some(0.6667));
    }
}
