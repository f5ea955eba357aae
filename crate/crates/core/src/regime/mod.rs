//! Two-stage probabilistic regime detection.
//!
//! Stage one runs k-means with k = 2 under Euclidean distance, which is
//! deliberately sensitive to magnitude: the smaller cluster collects the
//! extreme months and becomes Regime 0. Stage two reclusters the remaining
//! typical months by direction (cosine distance) into regimes 1..r. Both
//! stages yield fuzzy memberships which are blended into one distribution
//! per month; hard labels are the argmax.

mod gmm;
mod kmeans;
mod matching;
mod membership;

pub use gmm::{fit_gmm, fit_gmm_trace};
pub use kmeans::{elbow_k, kmeans, lloyd_from, ClusterFit, DistanceKind, MAX_LLOYD_ITERS};
pub use matching::match_clusters;
pub use membership::{
    combine_distributions, membership_from_distances, membership_probabilities,
    RegimeDistribution,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{month_index, FactorPanel, MacroPanel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeModel {
    /// k = 2 Euclidean split of all months.
    pub stage1: ClusterFit,
    /// Index of the smaller stage-1 cluster (Regime 0).
    pub outlier_cluster: usize,
    /// k = r cosine clustering of the typical months.
    pub stage2: ClusterFit,
    pub r: usize,
}

impl RegimeModel {
    pub fn n_regimes(&self) -> usize {
        self.r + 1
    }

    pub fn dim(&self) -> usize {
        self.stage1.centroids[0].len()
    }
}

/// Number of stage-2 regimes: fixed, or chosen by the elbow heuristic on
/// each fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeCount {
    Fixed(usize),
    Auto { k_max: usize },
}

/// Hard labels aligned with a factor panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabelSeries {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<usize>,
    /// Labels run over 0..=n_regimes-1... regimes 0..r, so n_regimes = r+1.
    pub n_regimes: usize,
}

impl RegimeLabelSeries {
    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.labels.len() {
            return Err(Error::data(format!(
                "{} dates but {} labels",
                self.dates.len(),
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.n_regimes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {} regimes",
                self.n_regimes
            )));
        }
        Ok(())
    }
}

/// Fit the two-stage model on raw factor rows. Returns the model and the
/// per-row hard labels (0 = outlier regime, 1..=r from stage 2).
pub fn fit_regimes(
    rows: &[Vec<f64>],
    count: RegimeCount,
    seed: u64,
) -> Result<(RegimeModel, Vec<usize>)> {
    fit_regimes_warm(rows, count, seed, None)
}

/// As [`fit_regimes`], optionally warm-starting from a previous model:
/// Lloyd iteration begins at the previous centroids and the fitted stage-2
/// clusters are relabeled onto the previous ones (see
/// [`match_clusters`]). Warm starting requires matching dimensions; if the
/// regime count differs the fit falls back to cold seeding.
pub fn fit_regimes_warm(
    rows: &[Vec<f64>],
    count: RegimeCount,
    seed: u64,
    prev: Option<&RegimeModel>,
) -> Result<(RegimeModel, Vec<usize>)> {
    let stage1 = match prev {
        Some(p) => lloyd_from(rows, p.stage1.centroids.clone(), DistanceKind::Euclidean, seed)?,
        None => kmeans(rows, 2, DistanceKind::Euclidean, seed)?,
    };
    if stage1.inertia == 0.0 && stage1.centroids[0] == stage1.centroids[1] {
        return Err(Error::data("degenerate panel: all rows identical"));
    }

    let sizes = stage1.cluster_sizes();
    let outlier_cluster = if sizes[0] != sizes[1] {
        if sizes[0] < sizes[1] {
            0
        } else {
            1
        }
    } else {
        // Size tie: the cluster whose members have the larger mean norm is
        // the extreme one.
        let mean_norm = |cluster: usize| -> f64 {
            let mut total = 0.0;
            let mut count = 0usize;
            for (row, &a) in rows.iter().zip(&stage1.assignments) {
                if a == cluster {
                    total += kmeans::norm(row);
                    count += 1;
                }
            }
            total / count as f64
        };
        if mean_norm(0) >= mean_norm(1) {
            0
        } else {
            1
        }
    };

    let typical_idx: Vec<usize> = (0..rows.len())
        .filter(|&i| stage1.assignments[i] != outlier_cluster)
        .collect();
    let typical_rows: Vec<Vec<f64>> = typical_idx.iter().map(|&i| rows[i].clone()).collect();

    let r = match count {
        RegimeCount::Fixed(r) => {
            if r < 1 {
                return Err(Error::config("regime count r must be at least 1"));
            }
            r
        }
        RegimeCount::Auto { k_max } => elbow_k(&typical_rows, k_max, DistanceKind::Cosine, seed)?,
    };
    if rows.len() < r + 2 {
        return Err(Error::config(format!(
            "{} rows cannot support r = {r} regimes (need r + 2)",
            rows.len()
        )));
    }
    if typical_rows.len() < r {
        return Err(Error::config(format!(
            "only {} typical months for r = {r} stage-2 clusters",
            typical_rows.len()
        )));
    }

    let warm2 = prev.filter(|p| p.r == r && p.dim() == rows[0].len());
    let mut stage2 = match warm2 {
        Some(p) => {
            lloyd_from(&typical_rows, p.stage2.centroids.clone(), DistanceKind::Cosine, seed)?
        }
        None => kmeans(&typical_rows, r, DistanceKind::Cosine, seed)?,
    };
    if let Some(p) = warm2 {
        let perm = matching::match_centroids(&p.stage2.centroids, &stage2.centroids, r)?;
        relabel(&mut stage2, &perm);
    }

    let mut labels = vec![0usize; rows.len()];
    for (pos, &i) in typical_idx.iter().enumerate() {
        labels[i] = stage2.assignments[pos] + 1;
    }
    let model = RegimeModel { stage1, outlier_cluster, stage2, r };
    Ok((model, labels))
}

/// Reorder a fit's clusters so cluster i becomes perm[i].
fn relabel(fit: &mut ClusterFit, perm: &[usize]) {
    let k = fit.centroids.len();
    let mut centroids = vec![Vec::new(); k];
    for (i, c) in fit.centroids.iter().enumerate() {
        centroids[perm[i]] = c.clone();
    }
    fit.centroids = centroids;
    for a in &mut fit.assignments {
        *a = perm[*a];
    }
}

/// Fit on a factor panel and return labels carrying the panel dates.
pub fn fit_regime_series(
    panel: &FactorPanel,
    count: RegimeCount,
    seed: u64,
    prev: Option<&RegimeModel>,
) -> Result<(RegimeModel, RegimeLabelSeries)> {
    panel.validate()?;
    let (model, labels) = fit_regimes_warm(&panel.rows, count, seed, prev)?;
    let series = RegimeLabelSeries {
        dates: panel.dates.clone(),
        labels,
        n_regimes: model.n_regimes(),
    };
    series.validate()?;
    Ok((model, series))
}

/// Full fuzzy distribution for one observation: stage-1 membership gives
/// the Regime 0 probability, stage-2 membership covers regimes 1..r, the
/// two are blended and renormalized.
pub fn classify(model: &RegimeModel, x: &[f64]) -> Result<RegimeDistribution> {
    if x.len() != model.dim() {
        return Err(Error::data(format!(
            "observation has {} entries, model expects {}",
            x.len(),
            model.dim()
        )));
    }
    let stage1_membership =
        membership_probabilities(x, &model.stage1.centroids, DistanceKind::Euclidean)?;
    let p_r0 = stage1_membership[model.outlier_cluster];
    let p_stage2 = if model.r == 1 {
        vec![1.0]
    } else {
        membership_probabilities(x, &model.stage2.centroids, DistanceKind::Cosine)?
    };
    combine_distributions(p_r0, &p_stage2)
}

/// The hard label Algorithm 1 assigns: nearest stage-1 centroid, then (for
/// typical months) nearest stage-2 centroid by direction.
pub fn hard_label(model: &RegimeModel, x: &[f64]) -> Result<usize> {
    if x.len() != model.dim() {
        return Err(Error::data("dimension mismatch in hard_label"));
    }
    let mut nearest = 0;
    let mut best = f64::INFINITY;
    for (c, centroid) in model.stage1.centroids.iter().enumerate() {
        let d = kmeans::sq_dist(x, centroid);
        if d < best {
            best = d;
            nearest = c;
        }
    }
    if nearest == model.outlier_cluster {
        return Ok(0);
    }
    let xn = kmeans::normalized(x)
        .ok_or_else(|| Error::data("zero-norm observation in cosine stage"))?;
    let mut label = 1;
    let mut best2 = f64::INFINITY;
    for (c, centroid) in model.stage2.centroids.iter().enumerate() {
        let d = kmeans::sq_dist(&xn, centroid);
        if d < best2 {
            best2 = d;
            label = c + 1;
        }
    }
    Ok(label)
}

/// P(Regime 0) per month.
pub fn crisis_probability(distributions: &[RegimeDistribution]) -> Vec<f64> {
    distributions.iter().map(|d| d.probs[0]).collect()
}

/// Per-regime averages of selected raw series, min-max normalized across
/// regimes within each series.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileTable {
    pub series_ids: Vec<String>,
    pub n_regimes: usize,
    /// series x regimes; NaN where a regime has no observations.
    pub raw_means: Vec<Vec<f64>>,
    /// Min-max normalized within each series row; NaN cells preserved.
    pub normalized: Vec<Vec<f64>>,
}

pub fn regime_profile(
    panel: &MacroPanel,
    labels: &RegimeLabelSeries,
    series_ids: &[String],
) -> Result<ProfileTable> {
    labels.validate()?;
    let n_regimes = labels.n_regimes;
    let col_of: Vec<usize> = series_ids
        .iter()
        .map(|id| {
            panel
                .series_index(id)
                .ok_or_else(|| Error::data(format!("series '{id}' not in panel")))
        })
        .collect::<Result<_>>()?;
    // Map label dates onto panel rows by calendar month.
    let row_of_month: std::collections::BTreeMap<i64, usize> = panel
        .dates
        .iter()
        .enumerate()
        .map(|(i, &d)| (month_index(d), i))
        .collect();

    let mut raw_means = vec![vec![f64::NAN; n_regimes]; series_ids.len()];
    for (s, &col) in col_of.iter().enumerate() {
        let mut sums = vec![0.0; n_regimes];
        let mut counts = vec![0usize; n_regimes];
        for (date, &label) in labels.dates.iter().zip(&labels.labels) {
            let row = *row_of_month.get(&month_index(*date)).ok_or_else(|| {
                Error::data(format!("label date {date} has no row in the macro panel"))
            })?;
            let v = panel.value(row, col);
            if !v.is_nan() {
                sums[label] += v;
                counts[label] += 1;
            }
        }
        for regime in 0..n_regimes {
            if counts[regime] > 0 {
                raw_means[s][regime] = sums[regime] / counts[regime] as f64;
            } else {
                log::warn!(
                    "regime {regime} has no observations for series '{}'; left out of its profile row",
                    series_ids[s]
                );
            }
        }
    }

    let normalized = raw_means
        .iter()
        .map(|row| {
            let present: Vec<f64> = row.iter().copied().filter(|v| !v.is_nan()).collect();
            let min = present.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = present.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter()
                .map(|&v| {
                    if v.is_nan() {
                        f64::NAN
                    } else if max == min {
                        0.0
                    } else {
                        (v - min) / (max - min)
                    }
                })
                .collect()
        })
        .collect();

    Ok(ProfileTable { series_ids: series_ids.to_vec(), n_regimes, raw_means, normalized })
}
