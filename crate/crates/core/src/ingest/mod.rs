//! FRED-MD ingestion: parse, transform, standardize, reduce.
//!
//! The pipeline turns a raw monthly macro panel into the low-dimensional
//! state vectors the regime engine clusters. Order of operations: bind
//! groups, exclude configured groups, apply per-series transform codes,
//! drop the first two months globally (transform alignment), drop columns
//! that are still too sparse, standardize with imputation, then PCA.

mod parse;
mod pca;
mod standardize;
mod tcode;

pub use parse::{
    attach_groups, drop_sparse_columns, exclude_group, exclude_groups, parse_fred_md,
    parse_group_map,
};
pub use pca::{fit_pca, fit_pca_matrix, PcaModel};
pub use standardize::{fit_standardizer, standardize, Standardizer};
pub use tcode::{apply_tcode, tcode_lag, TRANSFORM_HEAD_ROWS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{FactorPanel, MacroPanel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Cumulative explained-variance target for choosing n_kept.
    pub variance_threshold: f64,
    /// Groups removed before transformation.
    pub excluded_groups: Vec<u8>,
    /// Columns missing in more than this fraction of rows are dropped.
    pub max_missing_frac: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { variance_threshold: 0.95, excluded_groups: vec![6], max_missing_frac: 0.2 }
    }
}

/// Counts and drop lists produced along the pipeline, for logs and the run
/// manifest.
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub n_series_raw: usize,
    pub n_series_after_exclusion: usize,
    pub n_series_final: usize,
    pub dropped_sparse: Vec<String>,
    pub n_rows_raw: usize,
    pub n_rows_final: usize,
    pub n_kept: usize,
    pub cumulative_explained: Vec<f64>,
}

/// Apply each column's tcode and drop the alignment head rows.
pub fn transform_panel(panel: &MacroPanel) -> Result<MacroPanel> {
    let mut out = panel.clone();
    for j in 0..panel.n_series() {
        let meta = &panel.series[j];
        let transformed = apply_tcode(&panel.column(j), meta.tcode)
            .map_err(|e| Error::data(format!("series '{}': {e}", meta.id)))?;
        for (i, v) in transformed.into_iter().enumerate() {
            out.set_value(i, j, v);
        }
    }
    Ok(parse::drop_head_rows(&out, TRANSFORM_HEAD_ROWS))
}

/// Full reduction from a raw panel (groups already attached) to factors.
pub fn ingest_pipeline(
    raw: &MacroPanel,
    cfg: &IngestConfig,
) -> Result<(PcaModel, Standardizer, FactorPanel, IngestReport)> {
    raw.validate()?;
    if !(cfg.max_missing_frac >= 0.0 && cfg.max_missing_frac < 1.0) {
        return Err(Error::config(format!(
            "max_missing_frac {} outside [0, 1)",
            cfg.max_missing_frac
        )));
    }
    let n_series_raw = raw.n_series();
    let reduced = exclude_groups(raw, &cfg.excluded_groups);
    let n_series_after_exclusion = reduced.n_series();
    // The 127-variable count in common descriptions is ambiguous about
    // whether group exclusion has already happened; report both.
    log::info!(
        "macro panel: {n_series_raw} series raw, {n_series_after_exclusion} after excluding groups {:?}",
        cfg.excluded_groups
    );
    if n_series_after_exclusion == 0 {
        return Err(Error::data("no series left after group exclusion"));
    }

    let transformed = transform_panel(&reduced)?;
    let (dense, dropped_sparse) = drop_sparse_columns(&transformed, cfg.max_missing_frac);
    if !dropped_sparse.is_empty() {
        log::warn!(
            "dropped {} sparse series (> {:.0}% missing): {:?}",
            dropped_sparse.len(),
            cfg.max_missing_frac * 100.0,
            dropped_sparse
        );
    }
    if dense.n_series() == 0 {
        return Err(Error::data("every series exceeded the missing-data threshold"));
    }

    let scaler = fit_standardizer(&dense)?;
    let standardized = scaler.apply(&dense)?;
    let (model, factors) = fit_pca(&standardized, cfg.variance_threshold)?;

    let mut cumulative = Vec::with_capacity(model.explained_variance_ratio.len());
    let mut acc = 0.0;
    for r in &model.explained_variance_ratio {
        acc += r;
        cumulative.push(acc);
    }
    log::info!(
        "PCA kept {} of {} components at threshold {}",
        model.n_kept,
        model.explained_variance_ratio.len(),
        cfg.variance_threshold
    );

    let report = IngestReport {
        n_series_raw,
        n_series_after_exclusion,
        n_series_final: dense.n_series(),
        dropped_sparse,
        n_rows_raw: raw.n_rows(),
        n_rows_final: factors.n_rows(),
        n_kept: model.n_kept,
        cumulative_explained: cumulative,
    };
    Ok((model, scaler, factors, report))
}
