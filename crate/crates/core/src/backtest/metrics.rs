//! Performance metrics on monthly return series.
//!
//! All metrics are computed from raw monthly simple returns with a zero
//! risk-free rate and sqrt(12) annualization. Drawdowns come from the
//! compounded wealth curve and are reported as (negative) fractions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// mean / sample std, annualized.
    pub sharpe: f64,
    /// mean / downside root-mean-square, annualized; +infinity when no
    /// month is negative.
    pub sortino: f64,
    /// Mean of the per-month drawdown series (a fraction <= 0).
    pub avg_dd: f64,
    /// Worst peak-to-trough drawdown (a fraction <= 0).
    pub max_dd: f64,
    /// Fraction of months with a strictly positive return.
    pub pct_positive: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    let m = mean(values);
    let var =
        values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0);
    var.sqrt()
}

/// Per-month drawdown series of the compounded wealth curve.
pub fn drawdown_series(returns: &[f64]) -> Vec<f64> {
    let mut wealth = 1.0f64;
    let mut peak = 1.0f64;
    returns
        .iter()
        .map(|r| {
            wealth *= 1.0 + r;
            peak = peak.max(wealth);
            wealth / peak - 1.0
        })
        .collect()
}

pub fn metrics(returns: &[f64]) -> Result<Metrics> {
    if returns.len() < 2 {
        return Err(Error::data(format!(
            "metrics need at least 2 observations, got {}",
            returns.len()
        )));
    }
    if let Some(i) = returns.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("return {i} is not finite")));
    }
    let m = mean(returns);
    let std = sample_std(returns);
    if std == 0.0 {
        return Err(Error::numerical("zero return variance; Sharpe is undefined"));
    }
    let sharpe = m / std * 12f64.sqrt();

    let downside_sq =
        returns.iter().map(|&r| r.min(0.0).powi(2)).sum::<f64>() / returns.len() as f64;
    let sortino = if downside_sq == 0.0 {
        f64::INFINITY
    } else {
        m / downside_sq.sqrt() * 12f64.sqrt()
    };

    let dd = drawdown_series(returns);
    let max_dd = dd.iter().cloned().fold(0.0_f64, f64::min);
    let avg_dd = mean(&dd);
    let pct_positive =
        returns.iter().filter(|&&r| r > 0.0).count() as f64 / returns.len() as f64;

    Ok(Metrics { sharpe, sortino, avg_dd, max_dd, pct_positive })
}

/// Ex-post volatility scaling: multiply the whole series so its annualized
/// volatility equals `target_annual`.
pub fn vol_scale(returns: &[f64], target_annual: f64) -> Result<Vec<f64>> {
    if returns.len() < 12 {
        return Err(Error::data(format!(
            "vol scaling needs at least 12 observations, got {}",
            returns.len()
        )));
    }
    if !(target_annual > 0.0 && target_annual.is_finite()) {
        return Err(Error::config(format!("vol target {target_annual} must be positive")));
    }
    let std = sample_std(returns);
    if std == 0.0 {
        return Err(Error::numerical("zero return variance; cannot scale volatility"));
    }
    let scale = target_annual / (std * 12f64.sqrt());
    Ok(returns.iter().map(|r| r * scale).collect())
}

/// Cumulative log-return curve ln prod(1 + r), one point per month.
pub fn cumulative_log_returns(returns: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    returns
        .iter()
        .map(|r| {
            acc += (1.0 + r).ln();
            acc
        })
        .collect()
}
