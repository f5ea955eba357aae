//! Paired statistical comparisons across strategy configurations.
//!
//! Both tests treat each strategy configuration (scheme and breadth) as one
//! block and compare a control value against a treatment value per block:
//! a one-sided paired t-test on the block differences, and the
//! two-treatment Friedman/Nemenyi rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// One-sided p-value for "treatment mean exceeds control mean".
    pub p: f64,
    /// Zero difference variance: no test possible, p reported as 0.5.
    pub degenerate: bool,
    pub n: usize,
}

/// One-sided paired t-test of treatment > control.
pub fn paired_t_test(control: &[f64], treatment: &[f64]) -> Result<TTestResult> {
    let n = control.len();
    if treatment.len() != n {
        return Err(Error::data(format!(
            "{n} control values but {} treatment values",
            treatment.len()
        )));
    }
    if n < 2 {
        return Err(Error::data("paired t-test needs at least 2 blocks"));
    }
    let d: Vec<f64> = treatment.iter().zip(control).map(|(t, c)| t - c).collect();
    if let Some(i) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("difference {i} is not finite")));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Ok(TTestResult { t: 0.0, p: 0.5, degenerate: true, n });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::numerical(format!("t distribution: {e}")))?;
    let p = 1.0 - dist.cdf(t);
    Ok(TTestResult { t, p, degenerate: false, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub control_rank: f64,
    pub treatment_rank: f64,
    /// Two-sided p-value that the mean ranks differ.
    pub p: f64,
    pub n: usize,
}

/// Two-treatment Friedman/Nemenyi rank test. Within each block the larger
/// value gets rank 2 (metrics are oriented so larger is better, drawdowns
/// included since they are negative fractions); ties get 1.5 each. With
/// two treatments the Friedman statistic reduces to n * (rank gap)^2 on
/// one degree of freedom, i.e. a normal tail for sqrt(n) * |gap|.
pub fn nemenyi_test(control: &[f64], treatment: &[f64]) -> Result<NemenyiResult> {
    let n = control.len();
    if treatment.len() != n {
        return Err(Error::data(format!(
            "{n} control values but {} treatment values",
            treatment.len()
        )));
    }
    if n == 0 {
        return Err(Error::data("Nemenyi test needs at least one block"));
    }
    let mut control_sum = 0.0;
    let mut treatment_sum = 0.0;
    for (c, t) in control.iter().zip(treatment) {
        if !c.is_finite() || !t.is_finite() {
            return Err(Error::data("non-finite metric value in rank block"));
        }
        if t > c {
            control_sum += 1.0;
            treatment_sum += 2.0;
        } else if t < c {
            control_sum += 2.0;
            treatment_sum += 1.0;
        } else {
            control_sum += 1.5;
            treatment_sum += 1.5;
        }
    }
    let control_rank = control_sum / n as f64;
    let treatment_rank = treatment_sum / n as f64;
    let gap = (treatment_rank - control_rank).abs();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(gap * (n as f64).sqrt()))).min(1.0);
    Ok(NemenyiResult { control_rank, treatment_rank, p, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equal_samples_are_degenerate_at_half() {
        let v = [0.3, 0.5, 0.1, 0.9];
        let r = paired_t_test(&v, &v).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 0.5);
        assert_eq!(r.t, 0.0);
    }

    #[test]
    fn constant_difference_is_degenerate() {
        let c = [0.0, 1.0, 2.0, 3.0];
        let t: Vec<f64> = c.iter().map(|v| v + 1.0).collect();
        let r = paired_t_test(&c, &t).unwrap();
        assert!(r.degenerate);
    }

    /// Student-t upper tail by Simpson integration of the density.
    fn t_upper_tail_oracle(t: f64, dof: f64) -> f64 {
        let ln_gamma = |x: f64| -> f64 {
            // Stirling series with shift, accurate far beyond 1e-10 here.
            let mut x = x;
            let mut shift = 0.0;
            while x < 10.0 {
                shift -= x.ln();
                x += 1.0;
            }
            shift
                + 0.5 * ((2.0 * std::f64::consts::PI).ln() - x.ln())
                + x * (x.ln() - 1.0)
                + 1.0 / (12.0 * x)
                - 1.0 / (360.0 * x.powi(3))
                + 1.0 / (1260.0 * x.powi(5))
        };
        let log_norm = ln_gamma((dof + 1.0) / 2.0)
            - ln_gamma(dof / 2.0)
            - 0.5 * (dof * std::f64::consts::PI).ln();
        let density = |x: f64| -> f64 {
            (log_norm - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln()).exp()
        };
        // Integrate density from t to a far bound. The slowest tail here is
        // dof = 2 (~x^-3), whose mass beyond 6000 is below 1e-8.
        let hi = t.abs().max(1.0) * 6000.0;
        let steps = 2_000_000;
        let h = (hi - t) / steps as f64;
        let mut acc = density(t) + density(hi);
        for i in 1..steps {
            let x = t + i as f64 * h;
            acc += density(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn p_value_matches_integration_oracle() {
        let control = [0.0, 0.0, 0.0, 0.0];
        let d = [0.5, 0.2, 0.9, 0.4];
        let r = paired_t_test(&control, &d).unwrap();
        let oracle = t_upper_tail_oracle(r.t, 3.0);
        assert_abs_diff_eq!(r.p, oracle, epsilon = 1e-6);
        assert!(r.p < 0.05, "strongly positive differences should be significant");
    }

    #[test]
    fn oracle_agrees_across_sample_shapes() {
        let cases: [(&[f64], &[f64]); 3] = [
            (&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.2, 2.1, 3.4, 4.2, 5.3]),
            (&[0.5, 0.4, 0.6], &[0.4, 0.5, 0.55]),
            (&[0.0, 0.1, 0.0, 0.2, 0.1, 0.3], &[0.2, 0.0, 0.1, 0.4, 0.3, 0.2]),
        ];
        for (c, t) in cases {
            let r = paired_t_test(c, t).unwrap();
            let oracle = t_upper_tail_oracle(r.t, (c.len() - 1) as f64);
            assert_abs_diff_eq!(r.p, oracle, epsilon = 1e-6);
        }
    }

    #[test]
    fn negative_shift_gives_large_p() {
        let c = [1.0, 2.0, 3.0, 4.0];
        let t: Vec<f64> = c.iter().map(|v| v - 0.5 - 0.01 * v).collect();
        let r = paired_t_test(&c, &t).unwrap();
        assert!(r.p > 0.95);
    }

    #[test]
    fn sweep_of_wins_matches_rank_table() {
        // 12 blocks, treatment wins w of them.
        let control = vec![1.0; 12];
        for (wins, expect_c, expect_t) in [(12, 1.0, 2.0), (11, 1.083, 1.917)] {
            let treatment: Vec<f64> =
                (0..12).map(|i| if i < wins { 2.0 } else { 0.5 }).collect();
            let r = nemenyi_test(&control, &treatment).unwrap();
            assert_abs_diff_eq!(r.control_rank, expect_c, epsilon = 5e-4);
            assert_abs_diff_eq!(r.treatment_rank, expect_t, epsilon = 5e-4);
        }
    }

    #[test]
    fn twelve_of_twelve_p_value_frozen() {
        let control = vec![1.0; 12];
        let treatment = vec![2.0; 12];
        let r = nemenyi_test(&control, &treatment).unwrap();
        // sqrt(12) normal two-sided tail.
        assert_abs_diff_eq!(r.p, 5.32e-4, epsilon = 2e-5);
    }

    #[test]
    fn eleven_of_twelve_p_value_frozen() {
        let control = vec![1.0; 12];
        let mut treatment = vec![2.0; 12];
        treatment[7] = 0.5;
        let r = nemenyi_test(&control, &treatment).unwrap();
        // Gap 10/12, z = (10/12) sqrt(12) = 2.8868.
        assert_abs_diff_eq!(r.p, 0.0039, epsilon = 2e-4);
    }

    #[test]
    fn all_ties_give_flat_ranks_and_p_one() {
        let v = [0.1, 0.2, 0.3];
        let r = nemenyi_test(&v, &v).unwrap();
        assert_eq!(r.control_rank, 1.5);
        assert_eq!(r.treatment_rank, 1.5);
        assert!(r.p >= 0.99);
    }

    #[test]
    fn rank_sums_are_conserved() {
        let c = [0.3, -0.1, 0.2, 0.9, 0.9];
        let t = [0.1, 0.0, 0.2, 1.0, 0.8];
        let r = nemenyi_test(&c, &t).unwrap();
        assert_abs_diff_eq!(r.control_rank + r.treatment_rank, 3.0, epsilon = 1e-12);
        assert!(r.control_rank >= 1.0 && r.control_rank <= 2.0);
        assert!(r.treatment_rank >= 1.0 && r.treatment_rank <= 2.0);
    }
}
