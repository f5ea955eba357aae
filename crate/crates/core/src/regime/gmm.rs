//! Diagonal-covariance Gaussian mixture fitted by EM, as a probabilistic
//! comparator for the two-stage k-means path.
//!
//! Full covariances are deliberately avoided: on short windows of
//! high-dimensional factors they are singular. Initialization reuses the
//! seeded k-means fit so the comparison is apples-to-apples for a given
//! seed.

use crate::error::{Error, Result};
use crate::regime::kmeans::{kmeans, DistanceKind};

const GMM_MAX_ITERS: usize = 500;
const GMM_REL_TOL: f64 = 1e-6;
const VARIANCE_COLLAPSE: f64 = 1e-12;

/// Fit and return per-row responsibilities (rows on the simplex).
pub fn fit_gmm(x: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    fit_gmm_trace(x, k, seed).map(|(resp, _)| resp)
}

/// As [`fit_gmm`], also returning the log-likelihood after each EM
/// iteration (nondecreasing).
pub fn fit_gmm_trace(x: &[Vec<f64>], k: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    match em_run(x, k, seed) {
        Ok(out) => Ok(out),
        // One re-seed on component collapse, then give up.
        Err(Error::Numerical(_)) => em_run(x, k, seed.wrapping_add(1)),
        Err(e) => Err(e),
    }
}

fn em_run(x: &[Vec<f64>], k: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = x.len();
    let init = kmeans(x, k, DistanceKind::Euclidean, seed)?;
    let d = x[0].len();

    // Global per-dimension variance; floors initial component variances so
    // a pure cluster does not start collapsed.
    let mut global_mean = vec![0.0; d];
    for row in x {
        for (m, v) in global_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut global_mean {
        *m /= n as f64;
    }
    let mut global_var = vec![0.0; d];
    for row in x {
        for (g, (v, m)) in global_var.iter_mut().zip(row.iter().zip(&global_mean)) {
            *g += (v - m).powi(2);
        }
    }
    for g in &mut global_var {
        *g /= n as f64;
    }

    let sizes = init.cluster_sizes();
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::numerical("empty initial component"));
    }
    let mut weights: Vec<f64> = sizes.iter().map(|&s| s as f64 / n as f64).collect();
    let mut means = init.centroids.clone();
    let mut vars = vec![vec![0.0; d]; k];
    for (row, &a) in x.iter().zip(&init.assignments) {
        for (v, (xi, mi)) in vars[a].iter_mut().zip(row.iter().zip(&means[a])) {
            *v += (xi - mi).powi(2);
        }
    }
    for c in 0..k {
        for (j, v) in vars[c].iter_mut().enumerate() {
            *v /= sizes[c] as f64;
            let floor = 1e-6 * global_var[j].max(1e-6);
            if *v < floor {
                *v = floor;
            }
        }
    }

    let mut resp = vec![vec![0.0; k]; n];
    let mut loglik_trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..GMM_MAX_ITERS {
        // E-step in log space.
        let mut ll = 0.0;
        for (i, row) in x.iter().enumerate() {
            let mut logp = vec![0.0; k];
            for c in 0..k {
                let mut lp = weights[c].ln();
                for j in 0..d {
                    let diff = row[j] - means[c][j];
                    lp += -0.5 * ((2.0 * std::f64::consts::PI * vars[c][j]).ln()
                        + diff * diff / vars[c][j]);
                }
                logp[c] = lp;
            }
            let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logp.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
            for c in 0..k {
                resp[i][c] = (logp[c] - lse).exp();
            }
            ll += lse;
        }
        loglik_trace.push(ll);

        let rel = (ll - prev_ll).abs() / prev_ll.abs().max(1.0);
        if prev_ll.is_finite() && rel < GMM_REL_TOL {
            break;
        }
        prev_ll = ll;

        // M-step.
        for c in 0..k {
            let nc: f64 = (0..n).map(|i| resp[i][c]).sum();
            if nc <= 0.0 {
                return Err(Error::numerical(format!("component {c} lost all mass")));
            }
            weights[c] = nc / n as f64;
            for j in 0..d {
                means[c][j] = (0..n).map(|i| resp[i][c] * x[i][j]).sum::<f64>() / nc;
            }
            for j in 0..d {
                let v = (0..n)
                    .map(|i| resp[i][c] * (x[i][j] - means[c][j]).powi(2))
                    .sum::<f64>()
                    / nc;
                if v < VARIANCE_COLLAPSE {
                    return Err(Error::numerical(format!(
                        "component {c} variance collapsed in dimension {j}"
                    )));
                }
                vars[c][j] = v;
            }
        }
    }
    Ok((resp, loglik_trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> Vec<Vec<f64>> {
        let mut rows = Vec::new();
        for i in 0..20 {
            let jitter = 0.05 * ((i as f64) * 0.9).sin();
            rows.push(vec![0.0 + jitter]);
            rows.push(vec![50.0 - jitter]);
        }
        rows
    }

    #[test]
    fn separated_blobs_give_near_binary_responsibilities() {
        let rows = two_blobs();
        let resp = fit_gmm(&rows, 2, 4).unwrap();
        for (i, r) in resp.iter().enumerate() {
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(max > 1.0 - 1e-3, "row {i} responsibilities {r:?}");
        }
        // Rows from the same blob agree on the winning component.
        let arg = |r: &Vec<f64>| if r[0] > r[1] { 0 } else { 1 };
        assert_eq!(arg(&resp[0]), arg(&resp[2]));
        assert_ne!(arg(&resp[0]), arg(&resp[1]));
    }

    #[test]
    fn single_component_is_degenerate_posterior() {
        let rows = two_blobs();
        let resp = fit_gmm(&rows, 1, 0).unwrap();
        assert!(resp.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn loglik_nondecreasing() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.61).sin() * 2.0, (i as f64 * 1.17).cos()])
            .collect();
        let (_, trace) = fit_gmm_trace(&rows, 3, 9).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-7, "log-likelihood dropped: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn responsibilities_on_simplex() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 1.3).sin(), (i as f64 * 0.7).cos() * 3.0])
            .collect();
        let resp = fit_gmm(&rows, 3, 2).unwrap();
        for r in &resp {
            let sum: f64 = r.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(r.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn constant_data_collapses_even_after_reseed() {
        let rows = vec![vec![1.0, 1.0]; 10];
        assert!(matches!(fit_gmm(&rows, 2, 0), Err(Error::Numerical(_))));
    }
}
