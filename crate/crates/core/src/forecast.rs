//! Regime-conditional next-month forecasts.
//!
//! Three models share the same inputs (a window of asset returns, the
//! window's regime labels, and the propagated next-month regime
//! distribution):
//!
//! - naive: the conditional Sharpe ratio under the most likely next regime;
//! - Black-Litterman views: the conditional mean under that regime, fed to
//!   the posterior in [`crate::allocate`];
//! - ridge: one linear model per regime from factor vectors to next-month
//!   returns, blended across regimes by probability.
//!
//! Regimes too thin to estimate fall back to unconditional statistics (or
//! the pooled ridge model) and are flagged as such.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::AssetPanel;
use crate::regime::RegimeDistribution;

pub const DEFAULT_MIN_OBS: usize = 3;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

/// Sample moments of one asset conditional on one regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalStats {
    pub regime: usize,
    pub mean: f64,
    pub std: f64,
    /// mean / std.
    pub sharpe: f64,
    /// Months carrying this regime's label (even when fallback applies).
    pub n_obs: usize,
    /// True when the stats are unconditional window moments because the
    /// regime was too thin or degenerate.
    pub fallback: bool,
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Conditional mean/std/Sharpe of `returns` over months labeled `regime`.
pub fn conditional_moments(
    returns: &[f64],
    labels: &[usize],
    regime: usize,
    n_regimes: usize,
    min_obs: usize,
) -> Result<ConditionalStats> {
    if regime >= n_regimes {
        return Err(Error::config(format!("regime {regime} out of range 0..{n_regimes}")));
    }
    if returns.len() != labels.len() {
        return Err(Error::data(format!(
            "{} returns but {} labels",
            returns.len(),
            labels.len()
        )));
    }
    if returns.is_empty() {
        return Err(Error::data("empty return window"));
    }
    let subset: Vec<f64> = returns
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == regime)
        .map(|(&r, _)| r)
        .collect();
    let n_obs = subset.len();
    let (mean, std) = if n_obs >= min_obs.max(2) {
        mean_and_sample_std(&subset)
    } else {
        (f64::NAN, 0.0)
    };
    if std > 0.0 {
        return Ok(ConditionalStats { regime, mean, std, sharpe: mean / std, n_obs, fallback: false });
    }
    // Fallback: unconditional moments over the whole window.
    let (mean, std) = mean_and_sample_std(returns);
    if std == 0.0 {
        return Err(Error::numerical(
            "window returns have zero variance; no Sharpe is defined",
        ));
    }
    Ok(ConditionalStats { regime, mean, std, sharpe: mean / std, n_obs, fallback: true })
}

/// Per-asset conditional Sharpe under the most likely next regime
/// (ties toward the lowest index).
pub fn naive_forecast(
    panel: &AssetPanel,
    labels: &[usize],
    p_next: &RegimeDistribution,
    min_obs: usize,
) -> Result<Vec<f64>> {
    let regime = p_next.argmax();
    let n_regimes = p_next.probs.len();
    (0..panel.n_assets())
        .map(|j| {
            conditional_moments(&panel.asset_column(j), labels, regime, n_regimes, min_obs)
                .map(|s| s.sharpe)
        })
        .collect()
}

/// Per-asset conditional mean under the most likely next regime; these are
/// the Black-Litterman view values.
pub fn bl_views(
    panel: &AssetPanel,
    labels: &[usize],
    p_next: &RegimeDistribution,
    min_obs: usize,
) -> Result<Vec<f64>> {
    let regime = p_next.argmax();
    let n_regimes = p_next.probs.len();
    (0..panel.n_assets())
        .map(|j| {
            conditional_moments(&panel.asset_column(j), labels, regime, n_regimes, min_obs)
                .map(|s| s.mean)
        })
        .collect()
}

/// Ridge coefficients for one target: (X'X + lambda I)^-1 X'y, no
/// intercept. With lambda = 0 the system must be invertible.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::data("ridge fit needs at least one row"));
    }
    if x.len() != y.len() {
        return Err(Error::data(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if lambda < 0.0 {
        return Err(Error::config(format!("ridge lambda {lambda} must be nonnegative")));
    }
    let p = x[0].len();
    if p == 0 {
        return Err(Error::data("ridge fit with zero factors"));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(Error::data(format!("factor row {i} has {} entries, expected {p}", row.len())));
        }
    }
    let xm = DMatrix::from_fn(x.len(), p, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let mut gram = xm.transpose() * &xm;
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let rhs = xm.transpose() * yv;
    let solution = if lambda > 0.0 {
        gram.cholesky()
            .ok_or_else(|| Error::numerical("ridge normal equations not positive definite"))?
            .solve(&rhs)
    } else {
        let lu = gram.lu();
        lu.solve(&rhs)
            .ok_or_else(|| Error::numerical("singular normal equations with lambda = 0"))?
    };
    Ok(solution.iter().copied().collect())
}

/// One regime's linear model for every asset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeModel {
    pub regime: usize,
    /// assets x factors.
    pub coefs: Vec<Vec<f64>>,
    pub lambda: f64,
    /// True when this regime had too few training pairs and uses the
    /// pooled (all-months) coefficients.
    pub fallback: bool,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.coefs
            .iter()
            .map(|beta| {
                if beta.len() != x.len() {
                    return Err(Error::data(format!(
                        "factor vector has {} entries, model expects {}",
                        x.len(),
                        beta.len()
                    )));
                }
                Ok(beta.iter().zip(x).map(|(b, v)| b * v).sum())
            })
            .collect()
    }
}

/// Fit one ridge model per regime (0..=r) plus the pooled model. Training
/// pairs are (factor vector at month m, returns at month m+1), both inside
/// the window; regime i trains on pairs whose month m is labeled i.
pub fn fit_regime_ridge_models(
    factors: &[Vec<f64>],
    panel: &AssetPanel,
    labels: &[usize],
    n_regimes: usize,
    lambda: f64,
    min_obs: usize,
) -> Result<Vec<RidgeModel>> {
    let w = factors.len();
    if panel.n_rows() != w || labels.len() != w {
        return Err(Error::data(format!(
            "window misaligned: {} factor rows, {} return rows, {} labels",
            w,
            panel.n_rows(),
            labels.len()
        )));
    }
    if w < 2 {
        return Err(Error::data("window too short for one-step ridge pairs"));
    }
    let d = panel.n_assets();

    let fit_on = |months: &[usize]| -> Result<Vec<Vec<f64>>> {
        let xs: Vec<Vec<f64>> = months.iter().map(|&m| factors[m].clone()).collect();
        (0..d)
            .map(|j| {
                let ys: Vec<f64> = months.iter().map(|&m| panel.rows[m + 1][j]).collect();
                ridge_fit(&xs, &ys, lambda)
            })
            .collect()
    };

    let all_months: Vec<usize> = (0..w - 1).collect();
    let pooled_coefs = fit_on(&all_months)?;

    (0..n_regimes)
        .map(|regime| {
            let months: Vec<usize> =
                (0..w - 1).filter(|&m| labels[m] == regime).collect();
            if months.len() >= min_obs {
                Ok(RidgeModel { regime, coefs: fit_on(&months)?, lambda, fallback: false })
            } else {
                Ok(RidgeModel { regime, coefs: pooled_coefs.clone(), lambda, fallback: true })
            }
        })
        .collect()
}

/// Probability-weighted blend of the per-regime model outputs at the
/// current factor vector. `include_regime0 = false` reproduces the literal
/// sum over regimes 1..r only (no renormalization).
pub fn ridge_forecast(
    models: &[RidgeModel],
    x_t: &[f64],
    p_next: &RegimeDistribution,
    include_regime0: bool,
) -> Result<Vec<f64>> {
    if models.len() != p_next.probs.len() {
        return Err(Error::data(format!(
            "{} models for {} regime probabilities",
            models.len(),
            p_next.probs.len()
        )));
    }
    if models.is_empty() {
        return Err(Error::data("no ridge models"));
    }
    let d = models[0].coefs.len();
    let mut out = vec![0.0; d];
    for (i, model) in models.iter().enumerate() {
        if i == 0 && !include_regime0 {
            continue;
        }
        if model.coefs.len() != d {
            return Err(Error::data("ridge models disagree on asset count"));
        }
        let pred = model.predict(x_t)?;
        for (o, v) in out.iter_mut().zip(&pred) {
            *o += p_next.probs[i] * v;
        }
    }
    Ok(out)
}
