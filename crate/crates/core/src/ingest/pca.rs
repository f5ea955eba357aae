//! Principal component analysis via eigendecomposition of the column
//! covariance matrix.
//!
//! Components are stored for every dimension (not just the kept ones) so
//! reconstruction checks and later projections can use the full basis. Sign
//! indeterminacy is resolved deterministically: each component is flipped so
//! its entry of largest magnitude (first such index on ties) is positive.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{FactorPanel, MacroPanel};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// Column means of the fitted data; projection centers with these.
    pub mean: Vec<f64>,
    /// Column population standard deviations of the fitted data. Recorded
    /// for diagnostics; projection does not rescale (the ingest pipeline
    /// standardizes before fitting).
    pub scale: Vec<f64>,
    /// All components, one row per component, mutually orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Nonincreasing, sums to 1 over all components.
    pub explained_variance_ratio: Vec<f64>,
    pub n_kept: usize,
    pub threshold: f64,
}

impl PcaModel {
    /// Project one observation onto the kept components.
    pub fn project(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.project_n(row, self.n_kept)
    }

    /// Project onto the first `n` components.
    pub fn project_n(&self, row: &[f64], n: usize) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::data(format!(
                "observation has {} entries, model expects {}",
                row.len(),
                self.mean.len()
            )));
        }
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok(self.components[..n]
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Rebuild a centered observation from factor scores over the first
    /// `scores.len()` components.
    pub fn reconstruct_centered(&self, scores: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = vec![0.0; d];
        for (f, comp) in scores.iter().zip(&self.components) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += f * c;
            }
        }
        out
    }
}

/// Fit PCA on raw rows. Returns the model and the factor scores (first
/// `n_kept` components) for every input row.
pub fn fit_pca_matrix(rows: &[Vec<f64>], threshold: f64) -> Result<(PcaModel, Vec<Vec<f64>>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::config(format!(
            "variance threshold {threshold} outside (0, 1]"
        )));
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::data("PCA needs at least one row"));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::data("PCA needs at least one column"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::data(format!("row {i} has {} entries, expected {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("row {i} contains non-finite values")));
        }
    }

    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut scale = vec![0.0; d];
    for row in rows {
        for (s, (v, m)) in scale.iter_mut().zip(row.iter().zip(&mean)) {
            *s += (v - m).powi(2);
        }
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt();
    }

    // Population covariance of the centered data.
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::numerical("zero total variance, PCA undefined"));
    }

    let mut components = Vec::with_capacity(d);
    for &i in &order {
        let col: DVector<f64> = eig.eigenvectors.column(i).into();
        let mut comp: Vec<f64> = col.iter().copied().collect();
        // Deterministic sign: largest-magnitude entry positive, first index
        // wins ties.
        let mut pivot = 0;
        for (j, v) in comp.iter().enumerate() {
            if v.abs() > comp[pivot].abs() {
                pivot = j;
            }
        }
        if comp[pivot] < 0.0 {
            for v in &mut comp {
                *v = -*v;
            }
        }
        components.push(comp);
    }

    let explained_variance_ratio: Vec<f64> = eigenvalues.iter().map(|&l| l / total).collect();
    let mut n_kept = d;
    let mut cum = 0.0;
    for (i, r) in explained_variance_ratio.iter().enumerate() {
        cum += r;
        if cum >= threshold - 1e-9 {
            n_kept = i + 1;
            break;
        }
    }

    let model = PcaModel { mean, scale, components, explained_variance_ratio, n_kept, threshold };
    let factors: Result<Vec<Vec<f64>>> = rows.iter().map(|r| model.project(r)).collect();
    Ok((model, factors?))
}

/// Fit PCA on a standardized macro panel and package the scores as a
/// factor panel.
pub fn fit_pca(panel: &MacroPanel, variance_threshold: f64) -> Result<(PcaModel, FactorPanel)> {
    if panel.values.iter().any(|v| v.is_nan()) {
        return Err(Error::data("PCA input contains missing values; standardize first"));
    }
    let rows: Vec<Vec<f64>> = (0..panel.n_rows())
        .map(|i| (0..panel.n_series()).map(|j| panel.value(i, j)).collect())
        .collect();
    let (model, factors) = fit_pca_matrix(&rows, variance_threshold)?;
    let factor_panel = FactorPanel { dates: panel.dates.clone(), rows: factors };
    factor_panel.validate()?;
    Ok((model, factor_panel))
}
