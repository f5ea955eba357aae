//! Walk-forward backtest engine.
//!
//! Each out-of-sample month t fits the regime model on the trailing window
//! ending at t (warm-started from the previous month's model so cluster
//! identities stay stable), estimates the transition matrix from the window
//! labels, classifies month t, propagates one step ahead, turns the
//! forecast of every configured model into weights under every sizing
//! scheme, and realizes the return of month t+1. No statistic ever touches
//! data past the decision month; SHA-256 digests of the training inputs and
//! of the decision state are recorded every month so the no-lookahead audit
//! can replay any month from a truncated panel and compare.
//!
//! A model failure in some month (degenerate window, singular covariance)
//! never aborts the run and never passes silently: the affected strategies
//! hold flat (all-zero) weights that month and a warning is recorded.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocate::{
    apply_scheme, bl_posterior, bl_raw_weight_vector, mvo_scores, BlConfig, Scheme, WeightVector,
};
use crate::backtest::control::{mix_seed, transform_labels, LabelTransform};
use crate::backtest::metrics::{metrics, Metrics};
use crate::error::{Error, Result};
use crate::forecast::{
    bl_views, fit_regime_ridge_models, naive_forecast, ridge_forecast, DEFAULT_MIN_OBS,
    DEFAULT_RIDGE_LAMBDA,
};
use crate::panel::{month_index, AssetPanel, FactorPanel};
use crate::regime::{
    classify, fit_regimes_warm, RegimeCount, RegimeDistribution, RegimeModel,
};
use crate::transition::{estimate_transition_smoothed, propagate, TransitionMatrix};

pub const DEFAULT_WINDOW_MONTHS: usize = 48;
pub const DEFAULT_VOL_TARGET: f64 = 0.10;

/// Return forecast models the walk can run side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastModel {
    /// Conditional Sharpe of the most likely next regime.
    Naive,
    /// Black-Litterman posterior means with conditional-mean views.
    Bl,
    /// Per-regime ridge regressions blended by the next-regime distribution.
    Ridge,
    /// Unconditional mean-variance scores, the regime-blind baseline.
    Mvo,
}

impl ForecastModel {
    pub const ALL: [ForecastModel; 4] =
        [ForecastModel::Naive, ForecastModel::Bl, ForecastModel::Ridge, ForecastModel::Mvo];

    pub fn name(self) -> &'static str {
        match self {
            ForecastModel::Naive => "naive",
            ForecastModel::Bl => "bl",
            ForecastModel::Ridge => "ridge",
            ForecastModel::Mvo => "mvo",
        }
    }
}

impl std::str::FromStr for ForecastModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(ForecastModel::Naive),
            "bl" => Ok(ForecastModel::Bl),
            "ridge" => Ok(ForecastModel::Ridge),
            "mvo" => Ok(ForecastModel::Mvo),
            other => Err(Error::config(format!(
                "unknown model '{other}' (expected naive, bl, ridge or mvo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Trailing window length in months; the first forecast is made at the
    /// end of the first full window.
    pub window_months: usize,
    /// Position-count parameter values; each gets its own strategy leg.
    pub l_values: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub models: Vec<ForecastModel>,
    /// Annualized volatility target used only for scaled cumulative plots.
    pub vol_target_annual: f64,
    /// Seed for regime fitting (k-means initialization).
    pub seed: u64,
    /// Seed for the label transform streams; only used when the transform
    /// is randomized. Kept separate from `seed` so a control run fits the
    /// exact same regime models as its treatment.
    pub transform_seed: u64,
    /// Add-alpha smoothing for the transition matrix (0 = raw counts).
    pub smoothing_alpha: f64,
    pub regimes: RegimeCount,
    /// Minimum per-regime observations before conditional estimates fall
    /// back to pooled ones.
    pub min_obs: usize,
    pub ridge_lambda: f64,
    /// Whether the ridge blend includes the Regime 0 term.
    pub ridge_include_regime0: bool,
    pub bl: BlConfig,
    /// Also carry a leg that holds the raw normalized posterior instead of
    /// feeding it through a sizing scheme.
    pub bl_raw_weights: bool,
    /// Applied to the window labels each month before transition
    /// estimation; `permute` and `iid` are the randomized controls.
    pub label_transform: LabelTransform,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window_months: DEFAULT_WINDOW_MONTHS,
            l_values: vec![2, 3, 4],
            schemes: Scheme::ALL.to_vec(),
            models: ForecastModel::ALL.to_vec(),
            vol_target_annual: DEFAULT_VOL_TARGET,
            seed: 0,
            transform_seed: 0,
            smoothing_alpha: 0.0,
            regimes: RegimeCount::Fixed(5),
            min_obs: DEFAULT_MIN_OBS,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            ridge_include_regime0: true,
            bl: BlConfig::default(),
            bl_raw_weights: false,
            label_transform: LabelTransform::Identity,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_months < 12 {
            return Err(Error::config(format!(
                "window of {} months is too short (need at least 12)",
                self.window_months
            )));
        }
        if self.l_values.is_empty() || self.schemes.is_empty() || self.models.is_empty() {
            return Err(Error::config("need at least one l value, scheme and model"));
        }
        if self.l_values.iter().any(|&l| l == 0) {
            return Err(Error::config("position count l must be at least 1"));
        }
        if !(self.vol_target_annual > 0.0 && self.vol_target_annual.is_finite()) {
            return Err(Error::config(format!(
                "volatility target {} must be positive",
                self.vol_target_annual
            )));
        }
        if self.smoothing_alpha < 0.0 {
            return Err(Error::config("smoothing alpha must be nonnegative"));
        }
        Ok(())
    }

    /// Strategy leg names in output order (benchmarks not included).
    pub fn leg_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for model in &self.models {
            for scheme in &self.schemes {
                for l in &self.l_values {
                    names.push(format!("{}_{}_{}", model.name(), scheme.name(), l));
                }
            }
        }
        if self.bl_raw_weights {
            names.push("bl_raw".to_owned());
        }
        names
    }
}

/// One strategy's realized out-of-sample path.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyResult {
    pub name: String,
    pub monthly_returns: Vec<f64>,
    /// None when the path is degenerate (all-zero returns, or too short
    /// for the estimators).
    pub metrics: Option<Metrics>,
}

/// Everything decided at one out-of-sample month.
#[derive(Debug, Clone, Serialize)]
pub struct MonthRecord {
    /// Last month of the training window; all inputs end here.
    pub decision_date: NaiveDate,
    /// Month whose return the weights earn.
    pub realized_date: NaiveDate,
    /// Window labels after the configured transform (what the transition
    /// estimate actually saw). Empty when the regime fit failed.
    pub labels: Vec<usize>,
    pub p_now: Vec<f64>,
    pub p_next: Vec<f64>,
    /// Score vector per model; None marks a failed forecast.
    pub forecasts: BTreeMap<String, Option<Vec<f64>>>,
    /// Weight vector per strategy leg.
    pub weights: BTreeMap<String, Vec<f64>>,
    /// Digest of the raw training inputs (window dates, factor and asset
    /// rows). Two runs that agree here saw identical data.
    pub train_hash: String,
    /// Digest of the fitted decision state (labels, centroids, transition
    /// matrix, distributions, forecasts, weights).
    pub state_hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct WalkForwardOutput {
    pub decision_dates: Vec<NaiveDate>,
    pub realized_dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// Regime count of the final fitted model (constant under a fixed
    /// regime count; informational under the elbow).
    pub n_regimes: usize,
    pub strategies: Vec<StrategyResult>,
    pub months: Vec<MonthRecord>,
    pub warnings: Vec<String>,
}

impl WalkForwardOutput {
    pub fn strategy(&self, name: &str) -> Option<&StrategyResult> {
        self.strategies.iter().find(|s| s.name == name)
    }

    pub fn n_months(&self) -> usize {
        self.decision_dates.len()
    }
}

/// Incrementally build a canonical byte stream and digest it. Floats enter
/// as their exact bit patterns, so the digest is bit-for-bit sensitive.
pub(crate) struct StateHasher {
    inner: Sha256,
}

impl StateHasher {
    pub(crate) fn new() -> Self {
        StateHasher { inner: Sha256::new() }
    }

    pub(crate) fn tag(&mut self, label: &str) {
        self.inner.update(label.as_bytes());
        self.inner.update([0u8]);
    }

    pub(crate) fn f64s(&mut self, values: &[f64]) {
        for v in values {
            self.inner.update(v.to_bits().to_be_bytes());
        }
    }

    pub(crate) fn usizes(&mut self, values: &[usize]) {
        for &v in values {
            self.inner.update((v as u64).to_be_bytes());
        }
    }

    pub(crate) fn finish(self) -> String {
        self.inner.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Restrict both panels to their common consecutive run of months.
fn align_panels(factors: &FactorPanel, assets: &AssetPanel) -> Result<(FactorPanel, AssetPanel)> {
    let f_by_month: BTreeMap<i64, usize> =
        factors.dates.iter().enumerate().map(|(i, &d)| (month_index(d), i)).collect();
    let a_by_month: BTreeMap<i64, usize> =
        assets.dates.iter().enumerate().map(|(i, &d)| (month_index(d), i)).collect();
    let common: Vec<i64> =
        f_by_month.keys().filter(|m| a_by_month.contains_key(m)).copied().collect();
    if common.is_empty() {
        return Err(Error::data("factor and asset panels share no months"));
    }
    if common.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::data(
            "factor and asset panels overlap with a gap; the common months must be consecutive",
        ));
    }
    let f_rows: Vec<Vec<f64>> = common.iter().map(|m| factors.rows[f_by_month[m]].clone()).collect();
    let f_dates: Vec<NaiveDate> = common.iter().map(|m| factors.dates[f_by_month[m]]).collect();
    let a_rows: Vec<Vec<f64>> = common.iter().map(|m| assets.rows[a_by_month[m]].clone()).collect();
    let a_dates: Vec<NaiveDate> = common.iter().map(|m| assets.dates[a_by_month[m]]).collect();
    Ok((
        FactorPanel { dates: f_dates, rows: f_rows },
        AssetPanel { dates: a_dates, tickers: assets.tickers.clone(), rows: a_rows },
    ))
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut means = vec![0.0; d];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= rows.len() as f64;
    }
    means
}

/// Sample covariance with the n-1 denominator.
fn sample_covariance(rows: &[Vec<f64>], means: &[f64]) -> Vec<Vec<f64>> {
    let d = means.len();
    let n = rows.len();
    let mut cov = vec![vec![0.0; d]; d];
    for row in rows {
        for i in 0..d {
            let di = row[i] - means[i];
            for j in i..d {
                cov[i][j] += di * (row[j] - means[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

fn dot(w: &[f64], r: &[f64]) -> f64 {
    w.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// The fitted state a single decision month produces.
struct MonthState {
    model: RegimeModel,
    labels: Vec<usize>,
    transition: TransitionMatrix,
    p_now: RegimeDistribution,
    p_next: RegimeDistribution,
}

fn fit_month_state(
    window_rows: &[Vec<f64>],
    current_row: &[f64],
    cfg: &BacktestConfig,
    prev: Option<&RegimeModel>,
    month: u64,
) -> Result<MonthState> {
    let (model, raw_labels) = fit_regimes_warm(window_rows, cfg.regimes, cfg.seed, prev)?;
    let n_regimes = model.n_regimes();
    let labels = transform_labels(
        &raw_labels,
        n_regimes,
        cfg.label_transform,
        mix_seed(cfg.transform_seed, month),
    );
    let transition = estimate_transition_smoothed(&labels, n_regimes, cfg.smoothing_alpha)?;
    let p_now = classify(&model, current_row)?;
    let p_next = propagate(&p_now, &transition)?;
    Ok(MonthState { model, labels, transition, p_now, p_next })
}

fn hash_training_inputs(
    dates: &[NaiveDate],
    factor_rows: &[Vec<f64>],
    asset_rows: &[Vec<f64>],
) -> String {
    let mut h = StateHasher::new();
    h.tag("dates");
    for d in dates {
        h.tag(&d.format("%Y-%m-%d").to_string());
    }
    h.tag("factors");
    for row in factor_rows {
        h.f64s(row);
    }
    h.tag("assets");
    for row in asset_rows {
        h.f64s(row);
    }
    h.finish()
}

fn hash_decision_state(
    state: Option<&MonthState>,
    forecasts: &BTreeMap<String, Option<Vec<f64>>>,
    weights: &BTreeMap<String, Vec<f64>>,
) -> String {
    let mut h = StateHasher::new();
    match state {
        Some(st) => {
            h.tag("labels");
            h.usizes(&st.labels);
            h.tag("stage1");
            for c in &st.model.stage1.centroids {
                h.f64s(c);
            }
            h.usizes(&[st.model.outlier_cluster]);
            h.tag("stage2");
            for c in &st.model.stage2.centroids {
                h.f64s(c);
            }
            h.usizes(&[st.model.r]);
            h.tag("transition");
            for row in &st.transition.matrix {
                h.f64s(row);
            }
            h.tag("p_now");
            h.f64s(&st.p_now.probs);
            h.tag("p_next");
            h.f64s(&st.p_next.probs);
        }
        None => h.tag("fit_failed"),
    }
    h.tag("forecasts");
    for (name, y) in forecasts {
        h.tag(name);
        match y {
            Some(v) => h.f64s(v),
            None => h.tag("none"),
        }
    }
    h.tag("weights");
    for (name, w) in weights {
        h.tag(name);
        h.f64s(w);
    }
    h.finish()
}

/// Run the full walk-forward backtest. The panels are aligned on their
/// common months first; the walk then makes one decision per month from the
/// end of the first full window through the second-to-last month.
pub fn walk_forward(
    factors: &FactorPanel,
    assets: &AssetPanel,
    cfg: &BacktestConfig,
) -> Result<WalkForwardOutput> {
    cfg.validate()?;
    factors.validate()?;
    assets.validate()?;
    let (f, a) = align_panels(factors, assets)?;
    let n = f.n_rows();
    let w = cfg.window_months;
    if n < w + 1 {
        return Err(Error::config(format!(
            "aligned history has {n} months; a {w}-month window needs at least {}",
            w + 1
        )));
    }

    let mut warnings: Vec<String> = Vec::new();
    let spy_idx = match a.tickers.iter().position(|t| t.eq_ignore_ascii_case("spy")) {
        Some(i) => i,
        None => {
            warnings.push(format!(
                "no SPY column; using '{}' as the market benchmark",
                a.tickers[0]
            ));
            0
        }
    };

    let leg_names = cfg.leg_names();
    let mut leg_returns: Vec<Vec<f64>> = vec![Vec::new(); leg_names.len()];
    let mut spy_returns = Vec::new();
    let mut ew_returns = Vec::new();
    let mut months: Vec<MonthRecord> = Vec::new();
    let mut prev_model: Option<RegimeModel> = None;
    let mut last_n_regimes = 0usize;

    for t in (w - 1)..(n - 1) {
        let s = t + 1 - w;
        let window_factor_rows = &f.rows[s..=t];
        let window_asset_rows = &a.rows[s..=t];
        let decision_date = f.dates[t];
        let realized_date = f.dates[t + 1];

        let state = match fit_month_state(
            window_factor_rows,
            &f.rows[t],
            cfg,
            prev_model.as_ref(),
            t as u64,
        ) {
            Ok(st) => {
                last_n_regimes = st.model.n_regimes();
                prev_model = Some(st.model.clone());
                Some(st)
            }
            Err(e) => {
                warnings.push(format!(
                    "{decision_date}: regime fit failed ({e}); holding flat"
                ));
                None
            }
        };

        // Forecast score vectors, one per configured model.
        let window_panel = AssetPanel {
            dates: a.dates[s..=t].to_vec(),
            tickers: a.tickers.clone(),
            rows: window_asset_rows.to_vec(),
        };
        let mut moments: Option<(Vec<f64>, Vec<Vec<f64>>)> = None;
        let mut forecasts: BTreeMap<String, Option<Vec<f64>>> = BTreeMap::new();
        for model in &cfg.models {
            let scored: Result<Vec<f64>> = match &state {
                None => Err(Error::numerical("no fitted regime state")),
                Some(st) => match model {
                    ForecastModel::Naive => {
                        naive_forecast(&window_panel, &st.labels, &st.p_next, cfg.min_obs)
                    }
                    ForecastModel::Bl => {
                        let q = bl_views(&window_panel, &st.labels, &st.p_next, cfg.min_obs);
                        q.and_then(|q| {
                            let (mu, sigma) = moments.get_or_insert_with(|| {
                                let mu = column_means(window_asset_rows);
                                let sigma = sample_covariance(window_asset_rows, &mu);
                                (mu, sigma)
                            });
                            bl_posterior(mu, sigma, &q, &cfg.bl)
                        })
                    }
                    ForecastModel::Ridge => fit_regime_ridge_models(
                        window_factor_rows,
                        &window_panel,
                        &st.labels,
                        st.model.n_regimes(),
                        cfg.ridge_lambda,
                        cfg.min_obs,
                    )
                    .and_then(|models| {
                        ridge_forecast(&models, &f.rows[t], &st.p_next, cfg.ridge_include_regime0)
                    }),
                    ForecastModel::Mvo => {
                        let (mu, sigma) = moments.get_or_insert_with(|| {
                            let mu = column_means(window_asset_rows);
                            let sigma = sample_covariance(window_asset_rows, &mu);
                            (mu, sigma)
                        });
                        mvo_scores(mu, sigma)
                    }
                },
            };
            match scored {
                Ok(y) => {
                    forecasts.insert(model.name().to_owned(), Some(y));
                }
                Err(e) => {
                    if state.is_some() {
                        warnings.push(format!(
                            "{decision_date}: {} forecast failed ({e}); its strategies hold flat",
                            model.name()
                        ));
                    }
                    forecasts.insert(model.name().to_owned(), None);
                }
            }
        }

        // Size every leg and realize next month's return.
        let flat = vec![0.0; a.n_assets()];
        let mut weights_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut leg = 0usize;
        for model in &cfg.models {
            let score = forecasts[model.name()].clone();
            for scheme in &cfg.schemes {
                for &l in &cfg.l_values {
                    let name = &leg_names[leg];
                    let weights = match (&score, &state) {
                        (Some(y), Some(st)) => {
                            match apply_scheme(*scheme, y, l, Some(&st.p_next)) {
                                Ok(WeightVector { weights, .. }) => weights,
                                Err(e) => {
                                    warnings.push(format!(
                                        "{decision_date}: sizing {name} failed ({e}); holding flat"
                                    ));
                                    flat.clone()
                                }
                            }
                        }
                        _ => flat.clone(),
                    };
                    leg_returns[leg].push(dot(&weights, &a.rows[t + 1]));
                    weights_map.insert(name.clone(), weights);
                    leg += 1;
                }
            }
        }
        if cfg.bl_raw_weights {
            let name = &leg_names[leg];
            let weights = match &forecasts.get("bl") {
                Some(Some(y)) => match bl_raw_weight_vector(y) {
                    Ok(WeightVector { weights, .. }) => weights,
                    Err(e) => {
                        warnings.push(format!(
                            "{decision_date}: raw posterior weights failed ({e}); holding flat"
                        ));
                        flat.clone()
                    }
                },
                _ => flat.clone(),
            };
            leg_returns[leg].push(dot(&weights, &a.rows[t + 1]));
            weights_map.insert(name.clone(), weights);
        }
        spy_returns.push(a.rows[t + 1][spy_idx]);
        ew_returns.push(a.rows[t + 1].iter().sum::<f64>() / a.n_assets() as f64);

        let train_hash =
            hash_training_inputs(&f.dates[s..=t], window_factor_rows, window_asset_rows);
        let state_hash = hash_decision_state(state.as_ref(), &forecasts, &weights_map);
        months.push(MonthRecord {
            decision_date,
            realized_date,
            labels: state.as_ref().map(|st| st.labels.clone()).unwrap_or_default(),
            p_now: state.as_ref().map(|st| st.p_now.probs.clone()).unwrap_or_default(),
            p_next: state.as_ref().map(|st| st.p_next.probs.clone()).unwrap_or_default(),
            forecasts,
            weights: weights_map,
            train_hash,
            state_hash,
        });
    }

    let mut strategies: Vec<StrategyResult> = Vec::new();
    for (name, returns) in leg_names.iter().zip(leg_returns) {
        let m = metrics(&returns).ok();
        strategies.push(StrategyResult {
            name: name.clone(),
            monthly_returns: returns,
            metrics: m,
        });
    }
    for (name, returns) in [("spy", spy_returns), ("ew", ew_returns)] {
        let m = metrics(&returns).ok();
        strategies.push(StrategyResult {
            name: name.to_owned(),
            monthly_returns: returns,
            metrics: m,
        });
    }

    Ok(WalkForwardOutput {
        decision_dates: f.dates[(w - 1)..(n - 1)].to_vec(),
        realized_dates: f.dates[w..n].to_vec(),
        tickers: a.tickers.clone(),
        n_regimes: last_n_regimes,
        strategies,
        months,
        warnings,
    })
}
