//! Seeded k-means with Euclidean and cosine (spherical) distance, plus the
//! elbow heuristic for choosing k.
//!
//! Cosine mode is spherical k-means: rows and centroids are unit-normalized
//! and all updates run in Euclidean geometry on the sphere. The working
//! distance is the chord `|x/|x| - c|`, which orders pairs exactly like
//! cosine distance (chord^2 = 2 * (1 - cos)), so nearest-centroid decisions
//! agree with cosine while Lloyd's monotonicity argument still applies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERS: usize = 300;

/// Independent k-means++ restarts per fit; the lowest-inertia run wins.
pub const N_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterFit {
    /// For cosine mode these are unit vectors.
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared working distances to the assigned centroid.
    pub inertia: f64,
    pub distance_kind: DistanceKind,
    pub seed: u64,
}

impl ClusterFit {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 {
        return None;
    }
    Some(a.iter().map(|v| v / n).collect())
}

fn validate_rows(x: &[Vec<f64>], kind: DistanceKind) -> Result<usize> {
    let n = x.len();
    if n == 0 {
        return Err(Error::data("kmeans needs at least one row"));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::data("kmeans rows are empty vectors"));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::data(format!("row {i} has {} entries, expected {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("row {i} contains non-finite values")));
        }
        if kind == DistanceKind::Cosine && norm(row) == 0.0 {
            return Err(Error::data(format!("row {i} has zero norm in cosine mode")));
        }
    }
    Ok(d)
}

/// Rows in working space: unit-normalized for cosine, as-is for Euclidean.
fn working_rows(x: &[Vec<f64>], kind: DistanceKind) -> Vec<Vec<f64>> {
    match kind {
        DistanceKind::Euclidean => x.to_vec(),
        DistanceKind::Cosine => x.iter().map(|r| normalized(r).unwrap()).collect(),
    }
}

/// k-means++ seeding: first pick uniform, each further centroid sampled
/// with probability proportional to squared distance from the chosen set.
/// Sampling (rather than greedy farthest-point) keeps isolated outliers
/// from monopolizing the seeds while still spreading them out.
fn seed_centroids(work: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..work.len());
    let mut centroids = vec![work[first].clone()];
    let mut d_min: Vec<f64> = work.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d_min.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = work.len() - 1;
            for (i, &d) in d_min.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All rows coincide with a centroid; any row is as good as any
            // other.
            rng.random_range(0..work.len())
        };
        centroids.push(work[pick].clone());
        for (i, r) in work.iter().enumerate() {
            let d = sq_dist(r, centroids.last().unwrap());
            if d < d_min[i] {
                d_min[i] = d;
            }
        }
    }
    centroids
}

fn assign(work: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    work.iter()
        .map(|row| {
            let mut best = 0;
            let mut best_d = sq_dist(row, &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(row, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn inertia_of(work: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    work.iter().zip(assignments).map(|(row, &a)| sq_dist(row, &centroids[a])).sum()
}

/// Lloyd iteration from explicit starting centroids (used for seeding and
/// for warm-started rolling refits). Centroids must already live in working
/// space (unit vectors for cosine).
pub fn lloyd_from(
    x: &[Vec<f64>],
    initial_centroids: Vec<Vec<f64>>,
    kind: DistanceKind,
    seed: u64,
) -> Result<ClusterFit> {
    let d = validate_rows(x, kind)?;
    let k = initial_centroids.len();
    if k < 1 || k > x.len() {
        return Err(Error::config(format!("k = {k} outside 1..={}", x.len())));
    }
    for c in &initial_centroids {
        if c.len() != d {
            return Err(Error::data(format!(
                "initial centroid has {} entries, expected {d}",
                c.len()
            )));
        }
    }
    let work = working_rows(x, kind);
    let mut centroids = initial_centroids;
    let mut assignments = assign(&work, &centroids);

    for _ in 0..MAX_LLOYD_ITERS {
        // Centroid update: cluster mean, re-normalized in cosine mode.
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (row, &a) in work.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for s in &mut sums[c] {
                *s /= counts[c] as f64;
            }
            match kind {
                DistanceKind::Euclidean => centroids[c] = sums[c].clone(),
                DistanceKind::Cosine => {
                    // A zero-norm mean (cancelling members) leaves the
                    // centroid where it was; any unit vector is equally
                    // optimal there.
                    if let Some(unit) = normalized(&sums[c]) {
                        centroids[c] = unit;
                    }
                }
            }
        }
        // Empty clusters steal the globally farthest row, but only if that
        // row is at positive distance; on fully degenerate data the empty
        // cluster keeps its centroid and the loop terminates.
        let mut stolen: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in work.iter().enumerate() {
                if stolen.contains(&i) {
                    continue;
                }
                let dist = sq_dist(row, &centroids[assignments[i]]);
                if dist > 0.0 && best.map_or(true, |(_, b)| dist > b) {
                    best = Some((i, dist));
                }
            }
            if let Some((i, _)) = best {
                centroids[c] = work[i].clone();
                stolen.push(i);
            }
        }

        let next = assign(&work, &centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }

    let inertia = inertia_of(&work, &centroids, &assignments);
    Ok(ClusterFit { centroids, assignments, inertia, distance_kind: kind, seed })
}

/// Seeded k-means: N_RESTARTS independent k-means++ initializations, each
/// run to convergence, lowest inertia kept (earliest restart on ties).
/// Deterministic for a given (data, k, kind, seed).
pub fn kmeans(x: &[Vec<f64>], k: usize, kind: DistanceKind, seed: u64) -> Result<ClusterFit> {
    validate_rows(x, kind)?;
    if k < 1 || k > x.len() {
        return Err(Error::config(format!("k = {k} outside 1..={}", x.len())));
    }
    let work = working_rows(x, kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterFit> = None;
    for _ in 0..N_RESTARTS {
        let centroids = seed_centroids(&work, k, &mut rng);
        let fit = lloyd_from(x, centroids, kind, seed)?;
        if best.as_ref().map_or(true, |b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

/// Elbow heuristic: fit k = 1..=k_max, return the k in 2..=k_max-1 with the
/// largest second difference of inertia, ties toward smaller k.
pub fn elbow_k(x: &[Vec<f64>], k_max: usize, kind: DistanceKind, seed: u64) -> Result<usize> {
    if k_max < 3 {
        return Err(Error::config(format!("k_max = {k_max} must be at least 3")));
    }
    if x.len() <= k_max {
        return Err(Error::config(format!(
            "elbow needs more rows ({}) than k_max ({k_max})",
            x.len()
        )));
    }
    let inertia: Vec<f64> =
        (1..=k_max).map(|k| kmeans(x, k, kind, seed).map(|f| f.inertia)).collect::<Result<_>>()?;
    let mut best_k = 2;
    let mut best_curve = f64::NEG_INFINITY;
    for k in 2..=k_max - 1 {
        let curve = inertia[k - 2] - 2.0 * inertia[k - 1] + inertia[k];
        if curve > best_curve {
            best_curve = curve;
            best_k = k;
        }
    }
    Ok(best_k)
}
