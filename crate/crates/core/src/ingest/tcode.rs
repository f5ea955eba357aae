//! FRED-MD transformation codes.
//!
//! The seven codes follow the convention published with the FRED-MD
//! dataset: 1 level, 2 first difference, 3 second difference, 4 log,
//! 5 log first difference, 6 log second difference, 7 first difference of
//! the simple growth rate. Outputs stay aligned to the input dates; the
//! leading positions consumed by lags become missing (NaN).

use crate::error::{Error, Result};

/// Number of leading rows consumed by the longest transform. The ingest
/// pipeline drops this many rows globally after transforming all columns so
/// every column shares one alignment.
pub const TRANSFORM_HEAD_ROWS: usize = 2;

/// Leading positions that a given tcode sets to missing.
pub fn tcode_lag(tcode: u8) -> usize {
    match tcode {
        1 | 4 => 0,
        2 | 5 => 1,
        _ => 2,
    }
}

/// Apply one transformation code to a series. Missing entries (NaN)
/// propagate: an output position is missing if any input it consumes is
/// missing.
pub fn apply_tcode(series: &[f64], tcode: u8) -> Result<Vec<f64>> {
    if !(1..=7).contains(&tcode) {
        return Err(Error::config(format!("tcode {tcode} outside 1..7")));
    }
    let min_len = match tcode {
        1 | 4 => 1,
        2 | 5 => 2,
        _ => 3,
    };
    if series.len() < min_len {
        return Err(Error::data(format!(
            "series of length {} too short for tcode {tcode} (needs {min_len})",
            series.len()
        )));
    }
    if matches!(tcode, 4..=6) {
        for (i, &v) in series.iter().enumerate() {
            if !v.is_nan() && v <= 0.0 {
                return Err(Error::data(format!(
                    "nonpositive value {v} at position {i} under log tcode {tcode}"
                )));
            }
        }
    }
    if tcode == 7 {
        for (i, &v) in series.iter().enumerate() {
            if v == 0.0 {
                return Err(Error::data(format!(
                    "zero value at position {i} under growth-rate tcode 7"
                )));
            }
        }
    }

    let n = series.len();
    let x = series;
    let out = match tcode {
        1 => x.to_vec(),
        4 => x.iter().map(|&v| v.ln()).collect(),
        2 => diff1(x, |v| v),
        5 => diff1(x, f64::ln),
        3 => diff2(x, |v| v),
        6 => diff2(x, f64::ln),
        7 => {
            // growth g_t = x_t / x_{t-1} - 1, output Δg_t.
            let mut g = vec![f64::NAN; n];
            for t in 1..n {
                g[t] = x[t] / x[t - 1] - 1.0;
            }
            let mut out = vec![f64::NAN; n];
            for t in 2..n {
                out[t] = g[t] - g[t - 1];
            }
            out
        }
        _ => unreachable!(),
    };
    Ok(out)
}

fn diff1(x: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    for t in 1..x.len() {
        out[t] = f(x[t]) - f(x[t - 1]);
    }
    out
}

fn diff2(x: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    for t in 2..x.len() {
        out[t] = (f(x[t]) - f(x[t - 1])) - (f(x[t - 1]) - f(x[t - 2]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_diff_example() {
        let out = apply_tcode(&[100.0, 110.0, 121.0], 5).unwrap();
        assert!(out[0].is_nan());
        assert_abs_diff_eq!(out[1], 0.0953102, epsilon = 1e-6);
        assert_abs_diff_eq!(out[2], 0.0953102, epsilon = 1e-6);
    }

    #[test]
    fn identity_and_first_difference() {
        let x = [1.0, 3.0, 6.0];
        assert_eq!(apply_tcode(&x, 1).unwrap(), x.to_vec());
        let d = apply_tcode(&x, 2).unwrap();
        assert!(d[0].is_nan());
        assert_eq!(&d[1..], &[2.0, 3.0]);
    }

    #[test]
    fn second_difference_consumes_two_lags() {
        let d = apply_tcode(&[1.0, 3.0, 6.0, 10.0], 3).unwrap();
        assert!(d[0].is_nan() && d[1].is_nan());
        assert_eq!(&d[2..], &[1.0, 1.0]);
    }

    #[test]
    fn growth_rate_difference() {
        // growth: 0.10, 0.10 -> delta 0.0 at position 2.
        let d = apply_tcode(&[100.0, 110.0, 121.0], 7).unwrap();
        assert!(d[0].is_nan() && d[1].is_nan());
        assert_abs_diff_eq!(d[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_rejects_nonpositive() {
        assert!(apply_tcode(&[1.0, -1.0, 2.0], 5).is_err());
        assert!(apply_tcode(&[1.0, 0.0], 4).is_err());
    }

    #[test]
    fn short_series_rejected() {
        assert!(apply_tcode(&[1.0], 2).is_err());
        assert!(apply_tcode(&[1.0, 2.0], 6).is_err());
    }

    #[test]
    fn missing_propagates_per_position() {
        let d = apply_tcode(&[1.0, f64::NAN, 3.0, 4.0], 2).unwrap();
        assert!(d[0].is_nan());
        assert!(d[1].is_nan()); // x_1 missing
        assert!(d[2].is_nan()); // consumes x_1
        assert_eq!(d[3], 1.0);
    }

    #[test]
    fn inverse_recovers_positive_series() {
        // cumulative inverse of tcode 5: x_t = x_0 * exp(cumsum d).
        let x = [50.0, 55.0, 52.5, 60.0];
        let d = apply_tcode(&x, 5).unwrap();
        let mut rec = vec![x[0]];
        for t in 1..x.len() {
            rec.push(rec[t - 1] * d[t].exp());
        }
        for (a, b) in x.iter().zip(&rec) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}
