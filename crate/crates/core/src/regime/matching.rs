//! Label consistency across rolling refits.
//!
//! Rolling windows refit the regime model every month; cluster indices
//! coming out of k-means are arbitrary, so without alignment the label "2"
//! could mean different things in adjacent windows. `match_clusters` finds
//! the relabeling of the new stage-2 clusters that best matches the previous
//! window's centroids by total cosine distance. Regime 0 is structural
//! (defined by the stage-1 split) and never takes part.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::regime::kmeans::{dot, norm};
use crate::regime::RegimeModel;

/// Cosine distance 1 - cos(a, b); vectors must be nonzero.
fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - dot(a, b) / (norm(a) * norm(b))
}

/// Optimal assignment of `next` stage-2 clusters onto `prev` stage-2
/// clusters. Entry i of the result is the previous-window cluster index
/// that next's cluster i should be relabeled to. Brute force over all r!
/// permutations (r is small); ties resolve to the lexicographically
/// smallest permutation.
pub fn match_clusters(prev: &RegimeModel, next: &RegimeModel) -> Result<Vec<usize>> {
    if prev.r != next.r {
        return Err(Error::config(format!(
            "cannot match models with r = {} and r = {}",
            prev.r, next.r
        )));
    }
    let r = prev.r;
    let prev_c = &prev.stage2.centroids;
    let next_c = &next.stage2.centroids;
    match_centroids(prev_c, next_c, r)
}

pub(crate) fn match_centroids(
    prev_c: &[Vec<f64>],
    next_c: &[Vec<f64>],
    r: usize,
) -> Result<Vec<usize>> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..r).permutations(r) {
        let cost: f64 =
            (0..r).map(|i| cosine_distance(&next_c[i], &prev_c[perm[i]])).sum();
        if best.as_ref().map_or(true, |(b, _)| cost < *b) {
            best = Some((cost, perm));
        }
    }
    Ok(best.expect("r >= 1 guarantees at least one permutation").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regime::fit_regimes;
    use crate::regime::RegimeCount;

    /// Rows with a handful of far outliers and three clean directions.
    fn directional_rows(swap: bool, noise: f64) -> Vec<Vec<f64>> {
        let dirs: [[f64; 2]; 3] = [[1.0, 0.2], [-0.3, 1.0], [-0.8, -0.7]];
        let mut rows = Vec::new();
        for rep in 0..8 {
            let order: Vec<usize> = if swap { vec![1, 0, 2] } else { vec![0, 1, 2] };
            for &d in &order {
                let wiggle = noise * ((rep * 3 + d) as f64 * 0.37).sin();
                rows.push(vec![dirs[d][0] + wiggle, dirs[d][1] - wiggle]);
            }
        }
        rows.push(vec![40.0, -35.0]);
        rows.push(vec![-38.0, 41.0]);
        rows
    }

    #[test]
    fn identity_on_identical_models() {
        let rows = directional_rows(false, 0.01);
        let (model, _) = fit_regimes(&rows, RegimeCount::Fixed(3), 5).unwrap();
        assert_eq!(match_clusters(&model, &model).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn recovers_explicit_swap() {
        let rows = directional_rows(false, 0.01);
        let (model, _) = fit_regimes(&rows, RegimeCount::Fixed(3), 5).unwrap();
        let mut swapped = model.clone();
        swapped.stage2.centroids.swap(0, 1);
        let perm = match_clusters(&model, &swapped).unwrap();
        assert_eq!(perm, vec![1, 0, 2]);
    }

    #[test]
    fn stable_under_small_perturbation() {
        let rows = directional_rows(false, 0.01);
        let (model, _) = fit_regimes(&rows, RegimeCount::Fixed(3), 5).unwrap();
        let mut perturbed = model.clone();
        perturbed.stage2.centroids.swap(1, 2);
        for (i, c) in perturbed.stage2.centroids.iter_mut().enumerate() {
            for (j, v) in c.iter_mut().enumerate() {
                *v += 1e-3 * ((i * 7 + j) as f64).sin();
            }
        }
        let clean_perm = vec![0, 2, 1];
        assert_eq!(match_clusters(&model, &perturbed).unwrap(), clean_perm);
    }

    #[test]
    fn r_mismatch_is_config_error() {
        let rows = directional_rows(false, 0.01);
        let (m3, _) = fit_regimes(&rows, RegimeCount::Fixed(3), 5).unwrap();
        let (m2, _) = fit_regimes(&rows, RegimeCount::Fixed(2), 5).unwrap();
        assert!(match_clusters(&m3, &m2).is_err());
    }

    #[test]
    fn brute_force_cost_is_minimal() {
        // The returned permutation's cost must equal the enumerated minimum.
        let prev = vec![vec![1.0, 0.1], vec![0.0, 1.0], vec![-1.0, 0.4]];
        let next = vec![vec![-0.9, 0.5], vec![0.9, 0.2], vec![0.1, 1.1]];
        let perm = match_centroids(&prev, &next, 3).unwrap();
        let cost_of = |p: &[usize]| -> f64 {
            (0..3).map(|i| cosine_distance(&next[i], &prev[p[i]])).sum()
        };
        let mut costs: Vec<f64> = Vec::new();
        for p in (0..3).permutations(3) {
            costs.push(cost_of(&p));
        }
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((cost_of(&perm) - min).abs() < 1e-12);
        // next 0 points along prev 2, next 1 along prev 0, next 2 along prev 1.
        assert_eq!(perm, vec![2, 0, 1]);
    }
}
