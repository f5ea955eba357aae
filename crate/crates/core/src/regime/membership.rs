//! Fuzzy cluster membership and the two-stage probability combination.
//!
//! Membership of a point in cluster i with distance d_i out of k clusters:
//!
//! ```text
//! P(C_i) = (1 - d_i / D) / (k - 1),   D = sum_j d_j
//! ```
//!
//! which is a proper distribution (each term is nonnegative and the sum
//! telescopes to 1). If the point sits exactly on a centroid, membership is
//! the indicator of that centroid (uniform over ties). The stage-1 Regime 0
//! probability is then blended with the stage-2 distribution as
//!
//! ```text
//! P_R0 = -P_max * log2(1 - p_r0),   P_max = max(p_stage2)
//! ```
//!
//! prepended and renormalized. The log2 form pins the crossover at
//! p_r0 = 0.5: above it Regime 0 wins the argmax, below it the stage-2
//! argmax survives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regime::kmeans::{normalized, sq_dist, DistanceKind};

/// Clamp applied to p_r0 before the log2 blow-up at 1.
const P_R0_CLAMP: f64 = 1.0 - 1e-9;

/// Probability distribution over regimes 0..r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeDistribution {
    pub probs: Vec<f64>,
}

impl RegimeDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let dist = RegimeDistribution { probs };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::data("empty regime distribution"));
        }
        if self.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::data(format!("negative or non-finite probability in {:?}", self.probs)));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!("regime distribution sums to {sum}, not 1")));
        }
        Ok(())
    }

    /// Number of stage-2 regimes (distribution covers 0..=r).
    pub fn n_regimes(&self) -> usize {
        self.probs.len() - 1
    }

    /// Most likely regime; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Membership distribution from raw distances. Exact zeros dominate: the
/// result is uniform over the zero-distance centroids.
pub fn membership_from_distances(d: &[f64]) -> Result<Vec<f64>> {
    let k = d.len();
    if k < 2 {
        return Err(Error::config(format!("membership needs k >= 2, got {k}")));
    }
    if d.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::data(format!("invalid distance vector {d:?}")));
    }
    let zeros: Vec<usize> = (0..k).filter(|&i| d[i] == 0.0).collect();
    if !zeros.is_empty() {
        let share = 1.0 / zeros.len() as f64;
        let mut p = vec![0.0; k];
        for i in zeros {
            p[i] = share;
        }
        return Ok(p);
    }
    let total: f64 = d.iter().sum();
    Ok(d.iter().map(|&di| (1.0 - di / total) / (k - 1) as f64).collect())
}

/// Membership of `x` against a centroid set. Euclidean mode uses straight
/// l2 distances; cosine mode uses chord distances between unit-normalized
/// vectors (the spherical convention, matching how stage-2 centroids are
/// fitted).
pub fn membership_probabilities(
    x: &[f64],
    centroids: &[Vec<f64>],
    kind: DistanceKind,
) -> Result<Vec<f64>> {
    if centroids.len() < 2 {
        return Err(Error::config(format!(
            "membership needs k >= 2 centroids, got {}",
            centroids.len()
        )));
    }
    for c in centroids {
        if c.len() != x.len() {
            return Err(Error::data(format!(
                "dimension mismatch: point has {}, centroid has {}",
                x.len(),
                c.len()
            )));
        }
    }
    let distances: Vec<f64> = match kind {
        DistanceKind::Euclidean => centroids.iter().map(|c| sq_dist(x, c).sqrt()).collect(),
        DistanceKind::Cosine => {
            let xn = normalized(x)
                .ok_or_else(|| Error::data("zero-norm vector in cosine membership"))?;
            centroids
                .iter()
                .map(|c| {
                    let cn = normalized(c)
                        .ok_or_else(|| Error::data("zero-norm centroid in cosine membership"))?;
                    Ok(sq_dist(&xn, &cn).sqrt())
                })
                .collect::<Result<_>>()?
        }
    };
    membership_from_distances(&distances)
}

/// Blend the stage-1 Regime 0 probability with the stage-2 distribution.
pub fn combine_distributions(p_r0: f64, p_stage2: &[f64]) -> Result<RegimeDistribution> {
    if !(0.0..=1.0).contains(&p_r0) {
        return Err(Error::data(format!("p_r0 = {p_r0} outside [0, 1]")));
    }
    if p_stage2.is_empty() {
        return Err(Error::data("empty stage-2 distribution"));
    }
    if p_stage2.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::data(format!("invalid stage-2 distribution {p_stage2:?}")));
    }
    let sum: f64 = p_stage2.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::data(format!("stage-2 distribution sums to {sum}, not 1")));
    }
    let p_max = p_stage2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // max(0) turns the -0.0 produced at p_r0 = 0 into +0.0.
    let p_regime0 = (-p_max * (1.0 - p_r0.min(P_R0_CLAMP)).log2()).max(0.0);
    let mut probs = Vec::with_capacity(p_stage2.len() + 1);
    probs.push(p_regime0);
    probs.extend_from_slice(p_stage2);
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    RegimeDistribution::new(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_distances_split_evenly() {
        assert_eq!(membership_from_distances(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn three_cluster_example() {
        let p = membership_from_distances(&[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.416667, epsilon = 1e-6);
        assert_abs_diff_eq!(p[1], 0.333333, epsilon = 1e-6);
        assert_abs_diff_eq!(p[2], 0.25, epsilon = 1e-6);
    }

    #[test]
    fn zero_distance_takes_all() {
        assert_eq!(membership_from_distances(&[0.0, 5.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(
            membership_from_distances(&[0.0, 3.0, 0.0]).unwrap(),
            vec![0.5, 0.0, 0.5]
        );
    }

    #[test]
    fn membership_is_monotone_in_distance() {
        let d = [0.3, 1.7, 0.9, 2.4];
        let p = membership_from_distances(&d).unwrap();
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] < d[j] {
                    assert!(p[i] > p[j]);
                }
            }
        }
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_membership_uses_direction_only() {
        let centroids = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let a = membership_probabilities(&[2.0, 0.5], &centroids, DistanceKind::Cosine).unwrap();
        let b = membership_probabilities(&[8.0, 2.0], &centroids, DistanceKind::Cosine).unwrap();
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
        assert!(a[0] > a[1]);
    }

    #[test]
    fn combine_paper_worked_example() {
        // p_r0 = 0.5 makes P_R0 equal P_max: unnormalized
        // (0.5, 0.5, 0.3, 0.2) -> (1/3, 1/3, 0.2, 2/15).
        let d = combine_distributions(0.5, &[0.5, 0.3, 0.2]).unwrap();
        assert_abs_diff_eq!(d.probs[0], 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.probs[1], 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.probs[2], 0.2, epsilon = 1e-9);
        assert_abs_diff_eq!(d.probs[3], 0.2 / 1.5, epsilon = 1e-9);
    }

    #[test]
    fn combine_zero_keeps_stage2() {
        let d = combine_distributions(0.0, &[0.6, 0.4]).unwrap();
        assert_eq!(d.probs[0], 0.0);
        assert_abs_diff_eq!(d.probs[1], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs[2], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn combine_unnormalized_value() {
        // -0.4 * log2(0.25) = 0.8.
        let p_stage2 = [0.4, 0.35, 0.25];
        let d = combine_distributions(0.75, &p_stage2).unwrap();
        let p_r0_unnorm = 0.8;
        let total = p_r0_unnorm + 1.0;
        assert_abs_diff_eq!(d.probs[0], p_r0_unnorm / total, epsilon = 1e-9);
    }

    #[test]
    fn combine_near_one_concentrates_on_regime0() {
        let d = combine_distributions(1.0, &[0.5, 0.5]).unwrap();
        assert!(d.probs[0] > 0.9);
        assert_eq!(d.argmax(), 0);
    }

    #[test]
    fn argmax_crossover_at_half() {
        let stage2 = [0.45, 0.3, 0.25];
        let above = combine_distributions(0.51, &stage2).unwrap();
        assert_eq!(above.argmax(), 0);
        let below = combine_distributions(0.49, &stage2).unwrap();
        assert_eq!(below.argmax(), 1);
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(combine_distributions(-0.1, &[1.0]).is_err());
        assert!(combine_distributions(0.5, &[0.7, 0.7]).is_err());
        assert!(membership_from_distances(&[1.0]).is_err());
        assert!(RegimeDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(RegimeDistribution::new(vec![-0.1, 1.1]).is_err());
    }
}
