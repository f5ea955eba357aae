//! Command-line interface: ingest, regimes, backtest, and report.
//!
//! Runs are driven by an optional TOML config file; command-line flags
//! override file values, and every default is documented on the config
//! structs below. Each command writes its artifacts into one output
//! directory and is reproducible bit for bit: a rerun with the same config
//! and seed produces byte-identical files. Wall-clock timestamps are
//! confined to `run_manifest.json` so everything else can be diffed
//! directly.
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error.
//! Failures print a single machine-parseable line
//! `error[<category>]: <message>` to stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::allocate::{BlConfig, Scheme};
use crate::backtest::{
    audit_no_lookahead, cumulative_log_returns, metrics, run_comparison, vol_scale, walk_forward,
    BacktestConfig, ForecastModel, Metrics, WalkForwardOutput, DEFAULT_CONTROL_SEEDS,
};
use crate::error::{Error, Result};
use crate::forecast::{DEFAULT_MIN_OBS, DEFAULT_RIDGE_LAMBDA};
use crate::ingest::{
    attach_groups, drop_sparse_columns, exclude_groups, ingest_pipeline, parse_fred_md,
    parse_group_map, transform_panel, IngestConfig, IngestReport,
};
use crate::panel::{read_asset_csv, read_factor_csv, FactorPanel};
use crate::regime::{
    classify, fit_gmm, fit_regime_series, regime_profile, RegimeCount, RegimeDistribution,
    RegimeLabelSeries,
};
use crate::transition::{
    conditional_transition, estimate_transition_series, export_graph, matrix_csv,
};

pub const FACTORS_FILE: &str = "factors.csv";
pub const EXPLAINED_VARIANCE_FILE: &str = "explained_variance.csv";
pub const PCA_REPORT_FILE: &str = "pca_report.json";
pub const LABELS_FILE: &str = "regime_labels.csv";
pub const DISTRIBUTIONS_FILE: &str = "regime_distributions.csv";
pub const TRANSITION_FILE: &str = "transition_matrix.csv";
pub const TRANSITION_CONDITIONAL_FILE: &str = "transition_conditional.csv";
pub const TRANSITION_GRAPH_FILE: &str = "transition_graph.dot";
pub const PROFILE_FILE: &str = "regime_profile.csv";
pub const GMM_COMPARISON_FILE: &str = "gmm_comparison.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MONTHLY_RETURNS_FILE: &str = "monthly_returns.csv";
pub const CUMLOG_FILE: &str = "cumlog.csv";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const RESULTS_FILE: &str = "results.json";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const AUDIT_FILE: &str = "audit.json";
pub const SVG_FILE: &str = "plot.svg";
pub const REPORT_METRICS_FILE: &str = "report_metrics.csv";
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "regimelab",
    version,
    about = "Macro regime detection and regime-conditional asset allocation"
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic fit (overrides both regimes.seed and
    /// backtest.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: paths.out_dir from the config, else
    /// "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also emit a self-contained SVG line chart of cumulative log returns.
    #[arg(long, global = true)]
    svg: bool,
    /// regimes: also fit a diagonal GMM and emit the method-comparison CSV.
    #[arg(long, global = true)]
    gmm: bool,
    /// backtest: number of permuted-label control seeds (default 20).
    #[arg(long, global = true, value_name = "N")]
    controls: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Reduce a raw monthly macro panel to PCA factor state vectors.
    Ingest {
        /// Raw macro panel CSV (overrides paths.macro_csv).
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Series-to-group map CSV (overrides paths.groups_csv).
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Fit the two-stage regime model and write the regime artifacts.
    Regimes {
        /// Raw macro panel CSV (overrides paths.macro_csv).
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Series-to-group map CSV (overrides paths.groups_csv).
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Walk-forward backtest with treatment-vs-control comparisons.
    Backtest {
        /// Factor panel CSV (overrides paths.factors_csv).
        #[arg(long)]
        factors: Option<PathBuf>,
        /// Monthly asset returns CSV (overrides paths.assets_csv).
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Recompute and print the metrics table from a stored backtest run.
    Report {
        /// Directory written by a previous backtest run.
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

/// Stage-2 regime count in config files: an integer, or the string "auto"
/// for the per-fit elbow choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegimeCountConfig {
    Fixed(usize),
    Named(String),
}

impl RegimeCountConfig {
    fn resolve(&self, k_max: usize) -> Result<RegimeCount> {
        match self {
            RegimeCountConfig::Fixed(r) => Ok(RegimeCount::Fixed(*r)),
            RegimeCountConfig::Named(s) if s == "auto" => Ok(RegimeCount::Auto { k_max }),
            RegimeCountConfig::Named(s) => Err(Error::config(format!(
                "regime count must be an integer or \"auto\", got \"{s}\""
            ))),
        }
    }
}

/// Input and output locations. Any of these can be overridden by the
/// corresponding flag; all default to unset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Raw FRED-MD style macro panel CSV.
    pub macro_csv: Option<PathBuf>,
    /// Series-to-group map CSV with a series_id,group_id header.
    pub groups_csv: Option<PathBuf>,
    /// Factor panel CSV (backtest input; ingest output).
    pub factors_csv: Option<PathBuf>,
    /// Monthly asset returns CSV.
    pub assets_csv: Option<PathBuf>,
    /// Output directory; default "out".
    pub out_dir: Option<PathBuf>,
}

/// Regime fitting options for the regimes command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimesSection {
    /// Stage-2 regime count: integer or "auto" (default 5).
    pub r: RegimeCountConfig,
    /// Largest k the elbow search may try under "auto" (default 10).
    pub k_max: usize,
    /// Seed for k-means initialization (default 0).
    pub seed: u64,
    /// Raw (transformed) series profiled per regime; default: the first 8
    /// kept series of the panel.
    pub profile_series: Vec<String>,
}

impl Default for RegimesSection {
    fn default() -> Self {
        RegimesSection {
            r: RegimeCountConfig::Fixed(5),
            k_max: 10,
            seed: 0,
            profile_series: Vec::new(),
        }
    }
}

/// Backtest options. Field for field these mirror the engine's
/// [`BacktestConfig`]; the extra knobs control the comparison and audit
/// artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    /// Trailing training window in months (default 48).
    pub window_months: usize,
    /// Position-count parameter values (default [2, 3, 4]).
    pub l_values: Vec<usize>,
    /// Sizing schemes (default all of lns, los, lo, mx).
    pub schemes: Vec<Scheme>,
    /// Forecast models (default all of naive, bl, ridge, mvo).
    pub models: Vec<ForecastModel>,
    /// Annualized volatility target for scaled cumulative plots
    /// (default 0.10).
    pub vol_target_annual: f64,
    /// Seed for regime fitting inside the walk (default 0).
    pub seed: u64,
    /// Seed for the label-transform streams of control runs (default 0).
    pub transform_seed: u64,
    /// Add-alpha transition smoothing; 0 keeps raw counts (default 0).
    pub smoothing_alpha: f64,
    /// Stage-2 regime count: integer or "auto" (default 5).
    pub regimes: RegimeCountConfig,
    /// Largest k under "auto" (default 10).
    pub k_max: usize,
    /// Minimum per-regime observations before conditional estimates fall
    /// back to pooled ones (default 3).
    pub min_obs: usize,
    /// Ridge penalty (default 1.0).
    pub ridge_lambda: f64,
    /// Whether the ridge blend includes the Regime 0 term (default true).
    pub ridge_include_regime0: bool,
    /// Black-Litterman posterior settings (defaults: tau 0.05, omega
    /// proportional_to_prior, identity pick matrix).
    pub bl: BlConfig,
    /// Also carry the raw normalized Black-Litterman posterior as its own
    /// leg (default false).
    pub bl_raw_weights: bool,
    /// Permuted-label control seeds in the comparison report (default 20).
    pub controls: usize,
    /// Audit every Nth decision month by truncated replay; 0 disables the
    /// audit (default 0). A failed audit aborts with a numerical error.
    pub audit_stride: usize,
}

impl Default for BacktestSection {
    fn default() -> Self {
        BacktestSection {
            window_months: 48,
            l_values: vec![2, 3, 4],
            schemes: Scheme::ALL.to_vec(),
            models: ForecastModel::ALL.to_vec(),
            vol_target_annual: 0.10,
            seed: 0,
            transform_seed: 0,
            smoothing_alpha: 0.0,
            regimes: RegimeCountConfig::Fixed(5),
            k_max: 10,
            min_obs: DEFAULT_MIN_OBS,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            ridge_include_regime0: true,
            bl: BlConfig::default(),
            bl_raw_weights: false,
            controls: DEFAULT_CONTROL_SEEDS,
            audit_stride: 0,
        }
    }
}

impl BacktestSection {
    fn engine_config(&self) -> Result<BacktestConfig> {
        Ok(BacktestConfig {
            window_months: self.window_months,
            l_values: self.l_values.clone(),
            schemes: self.schemes.clone(),
            models: self.models.clone(),
            vol_target_annual: self.vol_target_annual,
            seed: self.seed,
            transform_seed: self.transform_seed,
            smoothing_alpha: self.smoothing_alpha,
            regimes: self.regimes.resolve(self.k_max)?,
            min_obs: self.min_obs,
            ridge_lambda: self.ridge_lambda,
            ridge_include_regime0: self.ridge_include_regime0,
            bl: self.bl.clone(),
            bl_raw_weights: self.bl_raw_weights,
            label_transform: crate::backtest::LabelTransform::Identity,
        })
    }
}

/// Everything a run needs, assembled from the config file and flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub regimes: RegimesSection,
    pub backtest: BacktestSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let _ = env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("info"),
    )
    .format_timestamp(None)
    .try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.regimes.seed = seed;
        cfg.backtest.seed = seed;
    }
    if let Some(controls) = cli.controls {
        cfg.backtest.controls = controls;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match &cli.cmd {
        Cmd::Ingest { panel, groups } => {
            let panel = required(panel, &cfg.paths.macro_csv, "macro panel", "--panel")?;
            let groups = optional(groups, &cfg.paths.groups_csv);
            cmd_ingest(&cfg, &panel, groups.as_deref(), &out_dir)
        }
        Cmd::Regimes { panel, groups } => {
            let panel = required(panel, &cfg.paths.macro_csv, "macro panel", "--panel")?;
            let groups = optional(groups, &cfg.paths.groups_csv);
            cmd_regimes(&cfg, &panel, groups.as_deref(), &out_dir, cli.gmm, cli.svg)
        }
        Cmd::Backtest { factors, assets } => {
            let factors = required(factors, &cfg.paths.factors_csv, "factor panel", "--factors")?;
            let assets = required(assets, &cfg.paths.assets_csv, "asset returns", "--assets")?;
            cmd_backtest(&cfg, &factors, &assets, &out_dir, cli.svg)
        }
        Cmd::Report { run } => {
            let run = run.clone().ok_or_else(|| {
                Error::config("no run directory: pass --run <dir> from a previous backtest")
            })?;
            let dest = if cli.out.is_some() { out_dir } else { run.clone() };
            cmd_report(&run, &dest, cli.svg)
        }
    }
}

fn required(
    flag: &Option<PathBuf>,
    configured: &Option<PathBuf>,
    what: &str,
    hint: &str,
) -> Result<PathBuf> {
    flag.clone().or_else(|| configured.clone()).ok_or_else(|| {
        Error::config(format!("no {what}: pass {hint} or set it under [paths] in the config"))
    })
}

fn optional(flag: &Option<PathBuf>, configured: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| configured.clone())
}

fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))
}

/// Write one artifact and record its name for the manifest.
fn emit(dir: &Path, name: &str, content: &str, written: &mut Vec<String>) -> Result<()> {
    std::fs::write(dir.join(name), content)?;
    written.push(name.to_owned());
    Ok(())
}

/// The run manifest is the only artifact carrying a timestamp.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    created_utc: String,
    inputs: BTreeMap<&'a str, String>,
    outputs: &'a [String],
    warnings: &'a [String],
    config: &'a RunConfig,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    inputs: BTreeMap<&str, String>,
    outputs: &[String],
    warnings: &[String],
    cfg: &RunConfig,
) -> Result<()> {
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        inputs,
        outputs,
        warnings,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::numerical(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(())
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", dir.display())))
}

/// Parse the raw macro panel and attach the group map when given.
fn load_macro_panel(
    panel_path: &Path,
    groups_path: Option<&Path>,
) -> Result<crate::panel::MacroPanel> {
    let mut panel = parse_fred_md(&read_input(panel_path)?)
        .map_err(|e| Error::data(format!("{}: {}", panel_path.display(), e.message())))?;
    if let Some(gp) = groups_path {
        let map = parse_group_map(&read_input(gp)?)
            .map_err(|e| Error::data(format!("{}: {}", gp.display(), e.message())))?;
        let bound = attach_groups(&mut panel, &map);
        log::info!("group map bound {bound} of {} series", panel.n_series());
    }
    Ok(panel)
}

fn cmd_ingest(
    cfg: &RunConfig,
    panel_path: &Path,
    groups_path: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    ensure_out_dir(out_dir)?;
    let panel = load_macro_panel(panel_path, groups_path)?;
    let (model, _, factors, report) = ingest_pipeline(&panel, &cfg.ingest)?;

    let mut written = Vec::new();
    let mut factors_text = String::from("date");
    for j in 0..factors.n_factors() {
        let _ = write!(factors_text, ",f{}", j + 1);
    }
    factors_text.push('\n');
    for (date, row) in factors.dates.iter().zip(&factors.rows) {
        factors_text.push_str(&date.format("%Y-%m-%d").to_string());
        for v in row {
            let _ = write!(factors_text, ",{v}");
        }
        factors_text.push('\n');
    }
    emit(out_dir, FACTORS_FILE, &factors_text, &mut written)?;

    let mut curve = String::from("component,ratio,cumulative\n");
    for (i, (r, c)) in model
        .explained_variance_ratio
        .iter()
        .zip(&report.cumulative_explained)
        .enumerate()
    {
        let _ = writeln!(curve, "{},{r},{c}", i + 1);
    }
    emit(out_dir, EXPLAINED_VARIANCE_FILE, &curve, &mut written)?;

    #[derive(Serialize)]
    struct PcaReport<'a> {
        variance_threshold: f64,
        #[serde(flatten)]
        report: &'a IngestReport,
    }
    let pca_json = serde_json::to_string_pretty(&PcaReport {
        variance_threshold: cfg.ingest.variance_threshold,
        report: &report,
    })
    .map_err(|e| Error::numerical(format!("report serialization: {e}")))?;
    emit(out_dir, PCA_REPORT_FILE, &(pca_json + "\n"), &mut written)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("macro_csv", panel_path.display().to_string());
    if let Some(gp) = groups_path {
        inputs.insert("groups_csv", gp.display().to_string());
    }
    write_manifest(out_dir, "ingest", inputs, &written, &[], cfg)?;
    log::info!(
        "ingest: {} months x {} factors written to {}",
        factors.n_rows(),
        factors.n_factors(),
        out_dir.display()
    );
    Ok(())
}

fn regime_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("regime_{i}")).collect()
}

fn labels_csv(labels: &RegimeLabelSeries) -> String {
    let mut out = String::from("date,label\n");
    for (date, label) in labels.dates.iter().zip(&labels.labels) {
        let _ = writeln!(out, "{},{label}", date.format("%Y-%m-%d"));
    }
    out
}

fn distributions_csv(dates: &[NaiveDate], dists: &[RegimeDistribution]) -> String {
    // probs covers regimes 0..=r, so the column count is probs.len(), not n_regimes().
    let mut out = String::from("date");
    for name in regime_names(dists[0].probs.len()) {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    for (date, dist) in dates.iter().zip(dists) {
        out.push_str(&date.format("%Y-%m-%d").to_string());
        for p in &dist.probs {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

fn profile_csv(table: &crate::regime::ProfileTable) -> String {
    let mut out = String::from("series_id");
    for name in regime_names(table.n_regimes) {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    for (id, row) in table.series_ids.iter().zip(&table.normalized) {
        out.push_str(id);
        for v in row {
            if v.is_nan() {
                out.push(',');
            } else {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// GMM-vs-kmeans comparison rows: hard labels and crisis probabilities
/// from both methods. The GMM's crisis component is the one whose
/// responsibility-weighted mean has the largest norm, mirroring how stage
/// one picks the extreme cluster.
fn gmm_comparison_csv(
    factors: &FactorPanel,
    labels: &RegimeLabelSeries,
    dists: &[RegimeDistribution],
    seed: u64,
) -> Result<String> {
    let k = labels.n_regimes;
    let resp = fit_gmm(&factors.rows, k, seed)?;
    let d = factors.n_factors();
    let mut means = vec![vec![0.0; d]; k];
    let mut mass = vec![0.0; k];
    for (row, r) in factors.rows.iter().zip(&resp) {
        for (c, &w) in r.iter().enumerate() {
            mass[c] += w;
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += w * v;
            }
        }
    }
    let norm_of = |c: usize| -> f64 {
        if mass[c] == 0.0 {
            return 0.0;
        }
        means[c].iter().map(|m| (m / mass[c]).powi(2)).sum::<f64>().sqrt()
    };
    let crisis = (0..k)
        .max_by(|&a, &b| norm_of(a).total_cmp(&norm_of(b)))
        .expect("at least one component");

    let mut out = String::from("date,kmeans_label,kmeans_p_crisis,gmm_label,gmm_p_crisis\n");
    for (((date, &label), dist), r) in
        labels.dates.iter().zip(&labels.labels).zip(dists).zip(&resp)
    {
        let gmm_label = (0..k).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        let _ = writeln!(
            out,
            "{},{label},{},{gmm_label},{}",
            date.format("%Y-%m-%d"),
            dist.probs[0],
            r[crisis]
        );
    }
    Ok(out)
}

fn cmd_regimes(
    cfg: &RunConfig,
    panel_path: &Path,
    groups_path: Option<&Path>,
    out_dir: &Path,
    gmm: bool,
    svg: bool,
) -> Result<()> {
    ensure_out_dir(out_dir)?;
    let panel = load_macro_panel(panel_path, groups_path)?;
    let (_, _, factors, _) = ingest_pipeline(&panel, &cfg.ingest)?;
    // The profile reads the transformed (stationary) series, rebuilt along
    // the same path the pipeline took.
    let (dense, _) = drop_sparse_columns(
        &transform_panel(&exclude_groups(&panel, &cfg.ingest.excluded_groups))?,
        cfg.ingest.max_missing_frac,
    );

    let count = cfg.regimes.r.resolve(cfg.regimes.k_max)?;
    let (model, labels) = fit_regime_series(&factors, count, cfg.regimes.seed, None)?;
    let dists: Vec<RegimeDistribution> = factors
        .rows
        .iter()
        .map(|row| classify(&model, row))
        .collect::<Result<_>>()?;
    let names = regime_names(model.n_regimes());

    let raw = estimate_transition_series(&labels)?;
    let cond = conditional_transition(&raw);

    let profile_ids: Vec<String> = if cfg.regimes.profile_series.is_empty() {
        dense.series.iter().take(8).map(|s| s.id.clone()).collect()
    } else {
        cfg.regimes.profile_series.clone()
    };
    let profile = regime_profile(&dense, &labels, &profile_ids)?;

    let mut written = Vec::new();
    emit(out_dir, LABELS_FILE, &labels_csv(&labels), &mut written)?;
    emit(out_dir, DISTRIBUTIONS_FILE, &distributions_csv(&labels.dates, &dists), &mut written)?;
    emit(out_dir, TRANSITION_FILE, &matrix_csv(&raw.matrix, &names)?, &mut written)?;
    emit(
        out_dir,
        TRANSITION_CONDITIONAL_FILE,
        &matrix_csv(&cond.matrix, &names)?,
        &mut written,
    )?;
    emit(out_dir, TRANSITION_GRAPH_FILE, &export_graph(&cond, &names)?, &mut written)?;
    emit(out_dir, PROFILE_FILE, &profile_csv(&profile), &mut written)?;
    if gmm {
        let csv = gmm_comparison_csv(&factors, &labels, &dists, cfg.regimes.seed)?;
        emit(out_dir, GMM_COMPARISON_FILE, &csv, &mut written)?;
    }
    if svg {
        let series: Vec<(String, Vec<f64>)> = (0..model.n_regimes())
            .map(|r| (names[r].clone(), dists.iter().map(|d| d.probs[r]).collect()))
            .collect();
        let chart = svg_line_chart("Regime probabilities", &labels.dates, &series);
        emit(out_dir, SVG_FILE, &chart, &mut written)?;
    }

    let mut inputs = BTreeMap::new();
    inputs.insert("macro_csv", panel_path.display().to_string());
    if let Some(gp) = groups_path {
        inputs.insert("groups_csv", gp.display().to_string());
    }
    write_manifest(out_dir, "regimes", inputs, &written, &[], cfg)?;
    log::info!(
        "regimes: {} months, r = {}, crisis share {:.1}%",
        labels.labels.len(),
        model.r,
        100.0 * labels.labels.iter().filter(|&&l| l == 0).count() as f64
            / labels.labels.len() as f64
    );
    Ok(())
}

/// Three-decimal metrics table mirroring the published layout: Sharpe and
/// Sortino as ratios, drawdowns and positive share in percent. A Sortino
/// with no losing months prints as inf.
fn metrics_csv_text(strategies: &[(String, Option<Metrics>)]) -> String {
    let mut out = String::from("model,sharpe,sortino,max_dd_pct,pct_positive,avg_dd_pct\n");
    for (name, m) in strategies {
        match m {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{name},{:.3},{:.3},{:.3},{:.3},{:.3}",
                    m.sharpe,
                    m.sortino,
                    100.0 * m.max_dd,
                    100.0 * m.pct_positive,
                    100.0 * m.avg_dd
                );
            }
            None => {
                let _ = writeln!(out, "{name},,,,,");
            }
        }
    }
    out
}

fn monthly_returns_csv(out: &WalkForwardOutput) -> String {
    let mut text = String::from("date");
    for s in &out.strategies {
        text.push(',');
        text.push_str(&s.name);
    }
    text.push('\n');
    for (i, date) in out.realized_dates.iter().enumerate() {
        text.push_str(&date.format("%Y-%m-%d").to_string());
        for s in &out.strategies {
            let _ = write!(text, ",{}", s.monthly_returns[i]);
        }
        text.push('\n');
    }
    text
}

/// Cumulative log returns, volatility-scaled to the configured target
/// where defined; strategies with undefined volatility (flat paths) fall
/// back to their raw returns.
fn cumlog_series(
    names_and_returns: &[(String, Vec<f64>)],
    vol_target: f64,
) -> Vec<(String, Vec<f64>)> {
    names_and_returns
        .iter()
        .map(|(name, returns)| {
            let scaled = vol_scale(returns, vol_target).unwrap_or_else(|_| returns.clone());
            (name.clone(), cumulative_log_returns(&scaled))
        })
        .collect()
}

fn cumlog_csv(dates: &[NaiveDate], series: &[(String, Vec<f64>)]) -> String {
    let mut text = String::from("date");
    for (name, _) in series {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (i, date) in dates.iter().enumerate() {
        text.push_str(&date.format("%Y-%m-%d").to_string());
        for (_, values) in series {
            let _ = write!(text, ",{}", values[i]);
        }
        text.push('\n');
    }
    text
}

fn weights_csv(out: &WalkForwardOutput) -> String {
    let mut text = String::from("decision_date,strategy");
    for t in &out.tickers {
        text.push(',');
        text.push_str(t);
    }
    text.push('\n');
    for month in &out.months {
        for (name, weights) in &month.weights {
            text.push_str(&month.decision_date.format("%Y-%m-%d").to_string());
            text.push(',');
            text.push_str(name);
            for w in weights {
                let _ = write!(text, ",{w}");
            }
            text.push('\n');
        }
    }
    text
}

fn forecasts_csv(out: &WalkForwardOutput) -> String {
    let mut text = String::from("decision_date,model");
    for t in &out.tickers {
        text.push(',');
        text.push_str(t);
    }
    text.push('\n');
    for month in &out.months {
        for (model, forecast) in &month.forecasts {
            text.push_str(&month.decision_date.format("%Y-%m-%d").to_string());
            text.push(',');
            text.push_str(model);
            match forecast {
                Some(values) => {
                    for v in values {
                        let _ = write!(text, ",{v}");
                    }
                }
                None => {
                    for _ in &out.tickers {
                        text.push(',');
                    }
                }
            }
            text.push('\n');
        }
    }
    text
}

fn cmd_backtest(
    cfg: &RunConfig,
    factors_path: &Path,
    assets_path: &Path,
    out_dir: &Path,
    svg: bool,
) -> Result<()> {
    ensure_out_dir(out_dir)?;
    let factors = read_factor_csv(factors_path)?;
    let assets = read_asset_csv(assets_path)?;
    let engine_cfg = cfg.backtest.engine_config()?;

    let output = walk_forward(&factors, &assets, &engine_cfg)?;
    log::info!(
        "backtest: {} decision months, {} strategies",
        output.n_months(),
        output.strategies.len()
    );
    let comparison = run_comparison(&factors, &assets, &engine_cfg, cfg.backtest.controls)?;

    let mut written = Vec::new();
    let named_metrics: Vec<(String, Option<Metrics>)> =
        output.strategies.iter().map(|s| (s.name.clone(), s.metrics)).collect();
    emit(out_dir, METRICS_FILE, &metrics_csv_text(&named_metrics), &mut written)?;
    emit(out_dir, MONTHLY_RETURNS_FILE, &monthly_returns_csv(&output), &mut written)?;

    let returns: Vec<(String, Vec<f64>)> = output
        .strategies
        .iter()
        .map(|s| (s.name.clone(), s.monthly_returns.clone()))
        .collect();
    let cumlog = cumlog_series(&returns, cfg.backtest.vol_target_annual);
    emit(out_dir, CUMLOG_FILE, &cumlog_csv(&output.realized_dates, &cumlog), &mut written)?;
    emit(out_dir, WEIGHTS_FILE, &weights_csv(&output), &mut written)?;
    emit(out_dir, FORECASTS_FILE, &forecasts_csv(&output), &mut written)?;

    let results_json = serde_json::to_string_pretty(&output)
        .map_err(|e| Error::numerical(format!("results serialization: {e}")))?;
    emit(out_dir, RESULTS_FILE, &(results_json + "\n"), &mut written)?;
    let comparison_json = serde_json::to_string_pretty(&comparison)
        .map_err(|e| Error::numerical(format!("comparison serialization: {e}")))?;
    emit(out_dir, COMPARISON_FILE, &(comparison_json + "\n"), &mut written)?;

    if cfg.backtest.audit_stride > 0 {
        let report = audit_no_lookahead(&factors, &assets, &engine_cfg, cfg.backtest.audit_stride)?;
        let audit_json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::numerical(format!("audit serialization: {e}")))?;
        emit(out_dir, AUDIT_FILE, &(audit_json + "\n"), &mut written)?;
        if !report.passed {
            let failed: Vec<String> = report
                .records
                .iter()
                .filter(|r| !r.passed())
                .map(|r| r.decision_date.format("%Y-%m").to_string())
                .collect();
            return Err(Error::numerical(format!(
                "no-lookahead audit failed at {}",
                failed.join(", ")
            )));
        }
    }

    if svg {
        let chart = svg_line_chart(
            "Cumulative log returns (vol-scaled)",
            &output.realized_dates,
            &cumlog,
        );
        emit(out_dir, SVG_FILE, &chart, &mut written)?;
    }

    let mut inputs = BTreeMap::new();
    inputs.insert("factors_csv", factors_path.display().to_string());
    inputs.insert("assets_csv", assets_path.display().to_string());
    write_manifest(out_dir, "backtest", inputs, &written, &output.warnings, cfg)?;
    Ok(())
}

fn cmd_report(run_dir: &Path, out_dir: &Path, svg: bool) -> Result<()> {
    let returns_path = run_dir.join(MONTHLY_RETURNS_FILE);
    if !returns_path.is_file() {
        return Err(Error::data(format!(
            "{} not found; point --run at a backtest output directory",
            returns_path.display()
        )));
    }
    // Strategy returns share the asset-CSV shape: date plus named columns.
    let panel = read_asset_csv(&returns_path)?;
    let named_metrics: Vec<(String, Option<Metrics>)> = (0..panel.n_assets())
        .map(|j| (panel.tickers[j].clone(), metrics(&panel.asset_column(j)).ok()))
        .collect();

    println!(
        "{:<16} {:>8} {:>8} {:>12} {:>14} {:>12}",
        "model", "sharpe", "sortino", "max_dd_pct", "pct_positive", "avg_dd_pct"
    );
    for (name, m) in &named_metrics {
        match m {
            Some(m) => println!(
                "{name:<16} {:>8.3} {:>8.3} {:>12.3} {:>14.3} {:>12.3}",
                m.sharpe,
                m.sortino,
                100.0 * m.max_dd,
                100.0 * m.pct_positive,
                100.0 * m.avg_dd
            ),
            None => println!("{name:<16} {:>8} {:>8} {:>12} {:>14} {:>12}", "-", "-", "-", "-", "-"),
        }
    }

    ensure_out_dir(out_dir)?;
    let mut written = Vec::new();
    emit(out_dir, REPORT_METRICS_FILE, &metrics_csv_text(&named_metrics), &mut written)?;
    if svg {
        let returns: Vec<(String, Vec<f64>)> = (0..panel.n_assets())
            .map(|j| (panel.tickers[j].clone(), panel.asset_column(j)))
            .collect();
        let cumlog = cumlog_series(&returns, 0.10);
        let chart = svg_line_chart("Cumulative log returns (vol-scaled)", &panel.dates, &cumlog);
        emit(out_dir, SVG_FILE, &chart, &mut written)?;
    }
    Ok(())
}

const SVG_PALETTE: [&str; 14] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39",
];

/// Minimal self-contained line chart: no scripts, no external assets.
fn svg_line_chart(title: &str, dates: &[NaiveDate], series: &[(String, Vec<f64>)]) -> String {
    let width = 960.0;
    let height = 560.0;
    let left = 70.0;
    let right = width - 210.0;
    let top = 48.0;
    let bottom = height - 40.0;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, values) in series {
        for &v in values {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    let n = dates.len().max(2);
    let x_of = |i: usize| left + (right - left) * i as f64 / (n - 1) as f64;
    let y_of = |v: f64| bottom - (bottom - top) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
font-family=\"monospace\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{left}\" y=\"24\" font-size=\"15\" fill=\"#222\">{title}</text>"
    );

    // Axes and horizontal gridlines with value labels.
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{left}\" y1=\"{y:.2}\" x2=\"{right:.2}\" y2=\"{y:.2}\" \
stroke=\"#ddd\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#444\">{v:.2}</text>",
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"#444\"/>\
<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right:.2}\" y2=\"{bottom}\" stroke=\"#444\"/>"
    );
    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        let _ = writeln!(
            svg,
            "<text x=\"{left}\" y=\"{:.2}\" fill=\"#444\">{}</text>\
<text x=\"{right:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#444\">{}</text>",
            bottom + 18.0,
            first.format("%Y-%m"),
            bottom + 18.0,
            last.format("%Y-%m")
        );
    }

    for (s, (name, values)) in series.iter().enumerate() {
        let color = SVG_PALETTE[s % SVG_PALETTE.len()];
        let mut points = String::new();
        for (i, &v) in values.iter().enumerate() {
            if v.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", x_of(i), y_of(v));
            }
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
        let ly = top + 16.0 * s as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" \
stroke-width=\"3\"/><text x=\"{:.2}\" y=\"{:.2}\" fill=\"#222\">{name}</text>",
            right + 12.0,
            right + 34.0,
            right + 40.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.backtest.window_months, 48);
        assert_eq!(back.backtest.controls, DEFAULT_CONTROL_SEEDS);
        assert_eq!(back.regimes.k_max, 10);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = RunConfig::from_toml("[backtest]\nwindwo_months = 48\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.message().contains("windwo_months"));
    }

    #[test]
    fn regime_count_accepts_int_and_auto() {
        let cfg = RunConfig::from_toml("[regimes]\nr = 3\n").unwrap();
        assert!(matches!(cfg.regimes.r.resolve(10).unwrap(), RegimeCount::Fixed(3)));
        let cfg = RunConfig::from_toml("[regimes]\nr = \"auto\"\nk_max = 7\n").unwrap();
        assert!(matches!(
            cfg.regimes.r.resolve(cfg.regimes.k_max).unwrap(),
            RegimeCount::Auto { k_max: 7 }
        ));
        let cfg = RunConfig::from_toml("[regimes]\nr = \"elbow\"\n").unwrap();
        assert!(cfg.regimes.r.resolve(10).is_err());
    }

    #[test]
    fn schemes_and_models_parse_from_names() {
        let cfg = RunConfig::from_toml(
            "[backtest]\nschemes = [\"lo\", \"mx\"]\nmodels = [\"naive\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.backtest.schemes, vec![Scheme::Lo, Scheme::Mx]);
        assert_eq!(cfg.backtest.models, vec![ForecastModel::Naive]);
        let engine = cfg.backtest.engine_config().unwrap();
        assert_eq!(engine.leg_names().len(), 2 * 3);
    }

    #[test]
    fn metrics_table_formats_percent_and_inf() {
        let rows = vec![
            (
                "winner".to_string(),
                Some(Metrics {
                    sharpe: 1.23456,
                    sortino: f64::INFINITY,
                    avg_dd: -0.05,
                    max_dd: -0.25,
                    pct_positive: 0.75,
                }),
            ),
            ("flat".to_string(), None),
        ];
        let text = metrics_csv_text(&rows);
        assert!(text.starts_with("model,sharpe,sortino,max_dd_pct,pct_positive,avg_dd_pct\n"));
        assert!(text.contains("winner,1.235,inf,-25.000,75.000,-5.000"));
        assert!(text.contains("flat,,,,,"));
    }

    #[test]
    fn svg_chart_is_deterministic_and_self_contained() {
        let dates = vec![
            NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2020, 2, 1).unwrap(),
            NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
        ];
        let series = vec![("a".to_string(), vec![0.0, 0.5, 0.25])];
        let one = svg_line_chart("t", &dates, &series);
        let two = svg_line_chart("t", &dates, &series);
        assert_eq!(one, two);
        assert!(one.contains("<polyline"));
        assert!(!one.contains("http://") || one.contains("http://www.w3.org/2000/svg"));
        assert!(!one.contains("<script"));
    }
}
