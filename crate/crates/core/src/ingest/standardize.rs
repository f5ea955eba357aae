//! Column standardization with missing-value imputation.
//!
//! Each column is demeaned and divided by its population standard deviation
//! over the non-missing entries; missing entries are then imputed to 0,
//! which is the column mean after standardization.

use crate::error::{Error, Result};
use crate::panel::MacroPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Fit per-column mean and population std over non-missing entries.
pub fn fit_standardizer(panel: &MacroPanel) -> Result<Standardizer> {
    let mut means = Vec::with_capacity(panel.n_series());
    let mut stds = Vec::with_capacity(panel.n_series());
    for j in 0..panel.n_series() {
        let col: Vec<f64> = panel.column(j).into_iter().filter(|v| !v.is_nan()).collect();
        let id = &panel.series[j].id;
        if col.len() < 2 {
            return Err(Error::data(format!(
                "column '{id}' has {} non-missing values, needs at least 2",
                col.len()
            )));
        }
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        let std = var.sqrt();
        if std == 0.0 {
            return Err(Error::data(format!("column '{id}' is constant (zero variance)")));
        }
        means.push(mean);
        stds.push(std);
    }
    Ok(Standardizer { means, stds })
}

impl Standardizer {
    /// Standardize a panel with these statistics; missing entries become 0.
    pub fn apply(&self, panel: &MacroPanel) -> Result<MacroPanel> {
        if self.means.len() != panel.n_series() {
            return Err(Error::data(format!(
                "standardizer fitted on {} columns, panel has {}",
                self.means.len(),
                panel.n_series()
            )));
        }
        let mut out = panel.clone();
        for i in 0..panel.n_rows() {
            for j in 0..panel.n_series() {
                let v = panel.value(i, j);
                let z = if v.is_nan() { 0.0 } else { (v - self.means[j]) / self.stds[j] };
                out.set_value(i, j, z);
            }
        }
        Ok(out)
    }

    /// Standardize a single observation row (used when classifying new
    /// months with a fitted model). Missing entries become 0.
    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.means.len() {
            return Err(Error::data(format!(
                "row has {} entries, standardizer expects {}",
                row.len(),
                self.means.len()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| if v.is_nan() { 0.0 } else { (v - self.means[j]) / self.stds[j] })
            .collect())
    }
}

/// Fit and apply in one step.
pub fn standardize(panel: &MacroPanel) -> Result<MacroPanel> {
    fit_standardizer(panel)?.apply(panel)
}
