//! Treatment-versus-control comparison across sizing blocks.
//!
//! Three questions, each answered over the grid of (scheme, position
//! count) blocks with a paired t-test and a two-treatment rank test:
//!
//! * does the naive regime forecast beat the same strategy driven by
//!   permuted regime labels (is the regime sequence itself informative)?
//! * does the Black-Litterman blend beat the regime-blind mean-variance
//!   baseline?
//! * does the per-regime ridge beat its own permuted-label control?
//!
//! Randomized controls are averaged over several control seeds per block
//! so a single lucky shuffle cannot drive the comparison. All five
//! metrics are oriented so that larger is better (drawdowns are negative
//! fractions), which lets one test orientation serve them all.

use serde::Serialize;

use crate::allocate::Scheme;
use crate::backtest::control::LabelTransform;
use crate::backtest::metrics::Metrics;
use crate::backtest::stats::{nemenyi_test, paired_t_test, NemenyiResult, TTestResult};
use crate::backtest::walk::{walk_forward, BacktestConfig, ForecastModel, WalkForwardOutput};
use crate::error::{Error, Result};
use crate::panel::{AssetPanel, FactorPanel};

pub const DEFAULT_CONTROL_SEEDS: usize = 20;

pub const METRIC_NAMES: [&str; 5] = ["sharpe", "sortino", "avg_dd", "max_dd", "pct_positive"];

fn metric_value(m: &Metrics, name: &str) -> f64 {
    match name {
        "sharpe" => m.sharpe,
        "sortino" => m.sortino,
        "avg_dd" => m.avg_dd,
        "max_dd" => m.max_dd,
        "pct_positive" => m.pct_positive,
        other => unreachable!("unknown metric {other}"),
    }
}

/// One (scheme, l) block's paired values.
#[derive(Debug, Clone, Serialize)]
pub struct BlockValue {
    pub scheme: Scheme,
    pub l: usize,
    pub treatment: f64,
    pub control: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricComparison {
    pub metric: String,
    pub blocks: Vec<BlockValue>,
    /// Blocks excluded because a side was missing or non-finite.
    pub dropped_blocks: usize,
    /// None when fewer than 2 blocks survive.
    pub t_test: Option<TTestResult>,
    pub nemenyi: Option<NemenyiResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonPanel {
    pub name: String,
    pub treatment_model: String,
    pub control_model: String,
    /// True when the control is the same model under randomized labels.
    pub randomized_control: bool,
    /// Control seeds averaged per block (0 for deterministic controls).
    pub n_control_seeds: usize,
    pub metrics: Vec<MetricComparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub panels: Vec<ComparisonPanel>,
    /// Blocks per panel before dropping: schemes x position counts.
    pub n_blocks: usize,
    pub warnings: Vec<String>,
}

/// Metric of one strategy leg, if defined and finite.
fn leg_metric(run: &WalkForwardOutput, leg: &str, metric: &str) -> Option<f64> {
    let m = run.strategy(leg)?.metrics?;
    let v = metric_value(&m, metric);
    v.is_finite().then_some(v)
}

/// Mean of a leg's metric across control runs; None if any run is
/// undefined or non-finite, so a block never mixes real and fallback
/// values.
fn mean_leg_metric(runs: &[WalkForwardOutput], leg: &str, metric: &str) -> Option<f64> {
    let mut total = 0.0;
    for run in runs {
        total += leg_metric(run, leg, metric)?;
    }
    Some(total / runs.len() as f64)
}

fn build_panel(
    name: &str,
    treatment_model: ForecastModel,
    control_model: ForecastModel,
    treatment_run: &WalkForwardOutput,
    control_runs: &[WalkForwardOutput],
    cfg: &BacktestConfig,
) -> ComparisonPanel {
    let randomized = !control_runs.is_empty();
    let mut metric_rows = Vec::with_capacity(METRIC_NAMES.len());
    for metric in METRIC_NAMES {
        let mut blocks = Vec::new();
        let mut dropped = 0usize;
        for &scheme in &cfg.schemes {
            for &l in &cfg.l_values {
                let t_leg = format!("{}_{}_{}", treatment_model.name(), scheme.name(), l);
                let c_leg = format!("{}_{}_{}", control_model.name(), scheme.name(), l);
                let treatment = leg_metric(treatment_run, &t_leg, metric);
                let control = if randomized {
                    mean_leg_metric(control_runs, &c_leg, metric)
                } else {
                    leg_metric(treatment_run, &c_leg, metric)
                };
                match (treatment, control) {
                    (Some(treatment), Some(control)) => {
                        blocks.push(BlockValue { scheme, l, treatment, control });
                    }
                    _ => dropped += 1,
                }
            }
        }
        let controls: Vec<f64> = blocks.iter().map(|b| b.control).collect();
        let treatments: Vec<f64> = blocks.iter().map(|b| b.treatment).collect();
        let t_test = paired_t_test(&controls, &treatments).ok();
        let nemenyi = nemenyi_test(&controls, &treatments).ok();
        metric_rows.push(MetricComparison {
            metric: metric.to_owned(),
            blocks,
            dropped_blocks: dropped,
            t_test,
            nemenyi,
        });
    }
    ComparisonPanel {
        name: name.to_owned(),
        treatment_model: treatment_model.name().to_owned(),
        control_model: control_model.name().to_owned(),
        randomized_control: randomized,
        n_control_seeds: control_runs.len(),
        metrics: metric_rows,
    }
}

/// Run the treatment walk plus `n_control_seeds` permuted-label walks and
/// assemble all three comparison panels the configured models allow.
pub fn run_comparison(
    factors: &FactorPanel,
    assets: &AssetPanel,
    cfg: &BacktestConfig,
    n_control_seeds: usize,
) -> Result<ComparisonReport> {
    if n_control_seeds == 0 {
        return Err(Error::config("need at least one control seed"));
    }
    let mut treatment_cfg = cfg.clone();
    treatment_cfg.label_transform = LabelTransform::Identity;
    let treatment_run = walk_forward(factors, assets, &treatment_cfg)?;

    let mut warnings: Vec<String> = treatment_run.warnings.clone();
    let has = |m: ForecastModel| cfg.models.contains(&m);

    // One permuted run per seed serves every randomized panel.
    let needs_controls = has(ForecastModel::Naive) || has(ForecastModel::Ridge);
    let mut control_runs = Vec::new();
    if needs_controls {
        for i in 0..n_control_seeds {
            let mut control_cfg = treatment_cfg.clone();
            control_cfg.label_transform = LabelTransform::Permute;
            control_cfg.transform_seed = cfg.transform_seed.wrapping_add(1 + i as u64);
            control_runs.push(walk_forward(factors, assets, &control_cfg)?);
        }
    }

    let mut panels = Vec::new();
    if has(ForecastModel::Naive) {
        panels.push(build_panel(
            "naive_vs_naive_random",
            ForecastModel::Naive,
            ForecastModel::Naive,
            &treatment_run,
            &control_runs,
            cfg,
        ));
    } else {
        warnings.push("naive model not configured; skipping its control panel".to_owned());
    }
    if has(ForecastModel::Bl) && has(ForecastModel::Mvo) {
        panels.push(build_panel(
            "bl_vs_mvo",
            ForecastModel::Bl,
            ForecastModel::Mvo,
            &treatment_run,
            &[],
            cfg,
        ));
    } else {
        warnings.push("bl and mvo not both configured; skipping their panel".to_owned());
    }
    if has(ForecastModel::Ridge) {
        panels.push(build_panel(
            "ridge_vs_ridge_random",
            ForecastModel::Ridge,
            ForecastModel::Ridge,
            &treatment_run,
            &control_runs,
            cfg,
        ));
    } else {
        warnings.push("ridge model not configured; skipping its control panel".to_owned());
    }

    Ok(ComparisonReport {
        panels,
        n_blocks: cfg.schemes.len() * cfg.l_values.len(),
        warnings,
    })
}
