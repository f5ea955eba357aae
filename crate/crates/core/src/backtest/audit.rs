//! No-lookahead audit by truncated replay.
//!
//! For an audited decision month t the walk is re-run from scratch on
//! panels truncated to end at t's realized month (t+1). That run can only
//! ever see data through t+1, and its final decision month is t. If the
//! full run's decision at t consumed any later data, its training-input or
//! decision-state digest must differ from the replay's. Matching digests
//! and matching realized returns, month by month, are the audit's pass
//! condition.

use chrono::NaiveDate;
use serde::Serialize;

use crate::backtest::walk::{walk_forward, BacktestConfig, WalkForwardOutput};
use crate::error::{Error, Result};
use crate::panel::{month_index, AssetPanel, FactorPanel};

/// Outcome of replaying one decision month.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRecord {
    pub decision_date: NaiveDate,
    /// Raw training inputs (dates, factor rows, asset rows) agree.
    pub train_hash_matches: bool,
    /// Fitted decision state (labels, centroids, transition matrix,
    /// distributions, forecasts, weights) agrees.
    pub state_hash_matches: bool,
    /// Every strategy's realized return for the month agrees bit for bit.
    pub returns_match: bool,
}

impl AuditRecord {
    pub fn passed(&self) -> bool {
        self.train_hash_matches && self.state_hash_matches && self.returns_match
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub records: Vec<AuditRecord>,
    pub n_audited: usize,
    pub passed: bool,
}

fn truncate_factors(panel: &FactorPanel, last_month: i64) -> FactorPanel {
    let keep = panel.dates.iter().take_while(|&&d| month_index(d) <= last_month).count();
    FactorPanel { dates: panel.dates[..keep].to_vec(), rows: panel.rows[..keep].to_vec() }
}

fn truncate_assets(panel: &AssetPanel, last_month: i64) -> AssetPanel {
    let keep = panel.dates.iter().take_while(|&&d| month_index(d) <= last_month).count();
    AssetPanel {
        dates: panel.dates[..keep].to_vec(),
        tickers: panel.tickers.clone(),
        rows: panel.rows[..keep].to_vec(),
    }
}

/// Compare the full run's decision month `i` with the replay's final month.
fn compare_month(full: &WalkForwardOutput, i: usize, replay: &WalkForwardOutput) -> AuditRecord {
    let a = &full.months[i];
    let b = replay.months.last().expect("replay has at least one month");
    let returns_match = b.decision_date == a.decision_date
        && full.strategies.len() == replay.strategies.len()
        && full
            .strategies
            .iter()
            .zip(&replay.strategies)
            .all(|(s, r)| {
                s.name == r.name
                    && s.monthly_returns[i].to_bits()
                        == (*r.monthly_returns.last().unwrap()).to_bits()
            });
    AuditRecord {
        decision_date: a.decision_date,
        train_hash_matches: a.train_hash == b.train_hash,
        state_hash_matches: a.state_hash == b.state_hash,
        returns_match,
    }
}

/// Replay every `stride`-th decision month (the last one always included)
/// on panels truncated at its realized month and compare digests.
pub fn audit_no_lookahead(
    factors: &FactorPanel,
    assets: &AssetPanel,
    cfg: &BacktestConfig,
    stride: usize,
) -> Result<AuditReport> {
    if stride == 0 {
        return Err(Error::config("audit stride must be at least 1"));
    }
    let full = walk_forward(factors, assets, cfg)?;
    let n = full.n_months();
    let mut audited: Vec<usize> = (0..n).step_by(stride).collect();
    if *audited.last().unwrap() != n - 1 {
        audited.push(n - 1);
    }

    let mut records = Vec::with_capacity(audited.len());
    for &i in &audited {
        let last = month_index(full.realized_dates[i]);
        let replay =
            walk_forward(&truncate_factors(factors, last), &truncate_assets(assets, last), cfg)?;
        records.push(compare_month(&full, i, &replay));
    }
    let passed = records.iter().all(AuditRecord::passed);
    Ok(AuditReport { n_audited: records.len(), records, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocate::Scheme;
    use crate::backtest::walk::ForecastModel;
    use crate::regime::RegimeCount;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panels(n: usize) -> (FactorPanel, AssetPanel) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dates: Vec<NaiveDate> = (0..n)
            .map(|i| {
                NaiveDate::from_ymd_opt(2000 + (i / 12) as i32, (i % 12) as u32 + 1, 1).unwrap()
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let base: [f64; 3] = if i % 11 == 5 {
                    [7.0, -5.0, 1.0]
                } else if i % 2 == 0 {
                    [1.0, 0.3, 0.0]
                } else {
                    [-0.1, 1.0, 0.2]
                };
                base.iter().map(|b| b + rng.random_range(-0.2..0.2)).collect()
            })
            .collect();
        let returns: Vec<Vec<f64>> =
            (0..n).map(|_| (0..3).map(|_| rng.random_range(-0.04..0.05)).collect()).collect();
        (
            FactorPanel { dates: dates.clone(), rows },
            AssetPanel {
                dates,
                tickers: vec!["SPY".into(), "AAA".into(), "BBB".into()],
                rows: returns,
            },
        )
    }

    fn cfg() -> BacktestConfig {
        BacktestConfig {
            window_months: 48,
            l_values: vec![2],
            schemes: vec![Scheme::Lo, Scheme::Lns],
            models: vec![ForecastModel::Naive, ForecastModel::Mvo],
            regimes: RegimeCount::Fixed(2),
            ..BacktestConfig::default()
        }
    }

    #[test]
    fn clean_walk_passes_the_audit() {
        let (f, a) = panels(60);
        let report = audit_no_lookahead(&f, &a, &cfg(), 3).unwrap();
        // Decisions 0, 3, 6, 9 plus the forced final month 11.
        assert_eq!(report.n_audited, 5);
        assert!(report.passed, "audit failed: {:?}", report.records);
        assert_eq!(
            report.records.last().unwrap().decision_date,
            NaiveDate::from_ymd_opt(2004, 11, 1).unwrap()
        );
    }

    #[test]
    fn every_month_can_be_audited() {
        let (f, a) = panels(54);
        let report = audit_no_lookahead(&f, &a, &cfg(), 1).unwrap();
        assert_eq!(report.n_audited, 6);
        assert!(report.passed);
    }

    #[test]
    fn tampered_state_is_caught() {
        let (f, a) = panels(60);
        let full = walk_forward(&f, &a, &cfg()).unwrap();
        let i = 4;
        let last = month_index(full.realized_dates[i]);
        let replay = walk_forward(
            &truncate_factors(&f, last),
            &truncate_assets(&a, last),
            &cfg(),
        )
        .unwrap();

        let honest = compare_month(&full, i, &replay);
        assert!(honest.passed());

        // A doctored digest or return must flip the verdict.
        let mut doctored = full.clone();
        doctored.months[i].state_hash = "0".repeat(64);
        assert!(!compare_month(&doctored, i, &replay).state_hash_matches);

        let mut doctored = full.clone();
        doctored.strategies[0].monthly_returns[i] += 1e-9;
        assert!(!compare_month(&doctored, i, &replay).returns_match);
    }

    #[test]
    fn zero_stride_is_rejected() {
        let (f, a) = panels(60);
        assert!(matches!(
            audit_no_lookahead(&f, &a, &cfg(), 0),
            Err(Error::Config(_))
        ));
    }
}
