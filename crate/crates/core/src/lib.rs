//! Macro regime detection and regime-conditional tactical asset allocation.
//!
//! The library covers the full monthly pipeline:
//!
//! 1. [`ingest`]: parse a FRED-MD style panel, apply transform codes,
//!    standardize and reduce to factor state vectors with PCA.
//! 2. [`regime`]: two-stage probabilistic k-means over the factors. Stage
//!    one separates outlier months (Regime 0) with an l2 split; stage two
//!    clusters the typical months by direction (cosine distance). Every
//!    month gets a full probability distribution over regimes, not just a
//!    label.
//! 3. [`transition`]: empirical regime transition matrix and one-step
//!    propagation of regime distributions.
//! 4. [`forecast`]: regime-conditional return forecasts (conditional
//!    Sharpe, Black-Litterman views, per-regime ridge).
//! 5. [`allocate`]: position sizing schemes and the Black-Litterman
//!    posterior.
//! 6. [`backtest`]: walk-forward evaluation, performance metrics, and
//!    statistical comparison against benchmarks and label-randomized
//!    controls.
//!
//! All randomness is seeded; every run is reproducible bit for bit.

pub mod allocate;
pub mod backtest;
pub mod cli;
pub mod error;
pub mod forecast;
pub mod ingest;
pub mod panel;
pub mod regime;
pub mod synthetic;
pub mod transition;

pub use error::{Error, Result};
