//! Walk-forward evaluation: the backtest engine, performance metrics,
//! statistical tests, randomized label controls, the no-lookahead audit,
//! and the treatment-vs-control comparison harness.

pub mod audit;
pub mod comparison;
pub mod control;
pub mod metrics;
pub mod stats;
pub mod walk;

pub use audit::{audit_no_lookahead, AuditRecord, AuditReport};
pub use comparison::{
    run_comparison, ComparisonPanel, ComparisonReport, MetricComparison, DEFAULT_CONTROL_SEEDS,
};
pub use control::{random_regime_control, transform_labels, LabelTransform};
pub use metrics::{cumulative_log_returns, metrics, vol_scale, Metrics};
pub use stats::{nemenyi_test, paired_t_test, NemenyiResult, TTestResult};
pub use walk::{
    walk_forward, BacktestConfig, ForecastModel, MonthRecord, StrategyResult, WalkForwardOutput,
};
