//! Position sizing and portfolio construction.
//!
//! Forecast scores become portfolio weights through one of four sizing
//! schemes (long/short, long-or-short, long-only, and a regime-gated mix),
//! all normalized so gross exposure sums to one. Forecast means can also
//! pass through a Black-Litterman posterior or a mean-variance score
//! before sizing.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regime::RegimeDistribution;

/// Sizing scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Long the top `l` positive scores, short the bottom `l` negative ones.
    Lns,
    /// Take the `l` largest absolute scores with their signs.
    Los,
    /// Long the top `l` strictly positive scores only.
    Lo,
    /// Crisis-gated: `los` when Regime 0 is the most likely next regime,
    /// `lo` otherwise.
    Mx,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Lns, Scheme::Los, Scheme::Lo, Scheme::Mx];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Lns => "lns",
            Scheme::Los => "los",
            Scheme::Lo => "lo",
            Scheme::Mx => "mx",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lns" => Ok(Scheme::Lns),
            "los" => Ok(Scheme::Los),
            "lo" => Ok(Scheme::Lo),
            "mx" => Ok(Scheme::Mx),
            other => Err(Error::config(format!(
                "unknown sizing scheme '{other}' (expected lns, los, lo, or mx)"
            ))),
        }
    }
}

/// Portfolio weights for one month. When no asset qualifies under the
/// scheme the vector is all zero and `empty` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub empty: bool,
}

impl WeightVector {
    pub fn gross(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

fn validate_scores(y: &[f64], l: usize) -> Result<()> {
    if y.is_empty() {
        return Err(Error::data("no forecast scores to size"));
    }
    if l == 0 {
        return Err(Error::config("sizing breadth l must be at least 1"));
    }
    if let Some(j) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("forecast score {j} is not finite")));
    }
    Ok(())
}

/// Indices sorted by key descending, ties broken by index ascending.
fn order_desc_by<F: Fn(usize) -> f64>(n: usize, key: F) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap().then(a.cmp(&b)));
    idx
}

/// Indices sorted by key ascending, ties broken by index ascending.
fn order_asc_by<F: Fn(usize) -> f64>(n: usize, key: F) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b)));
    idx
}

fn normalized(y: &[f64], selected: &[usize]) -> WeightVector {
    let mut weights = vec![0.0; y.len()];
    if selected.is_empty() {
        return WeightVector { weights, empty: true };
    }
    let gross: f64 = selected.iter().map(|&j| y[j].abs()).sum();
    for &j in selected {
        weights[j] = y[j] / gross;
    }
    WeightVector { weights, empty: false }
}

/// Long/short: up to `l` highest positive scores long, up to `l` lowest
/// negative scores short, weights proportional to score over gross.
pub fn size_lns(y: &[f64], l: usize) -> Result<WeightVector> {
    validate_scores(y, l)?;
    let desc = order_desc_by(y.len(), |j| y[j]);
    let asc = order_asc_by(y.len(), |j| y[j]);
    let longs: Vec<usize> = desc.into_iter().filter(|&j| y[j] > 0.0).take(l).collect();
    let shorts: Vec<usize> = asc.into_iter().filter(|&j| y[j] < 0.0).take(l).collect();
    let mut selected = longs;
    selected.extend(shorts);
    Ok(normalized(y, &selected))
}

/// Long-or-short: the `l` largest absolute scores, held with their signs.
pub fn size_los(y: &[f64], l: usize) -> Result<WeightVector> {
    validate_scores(y, l)?;
    let order = order_desc_by(y.len(), |j| y[j].abs());
    let selected: Vec<usize> =
        order.into_iter().filter(|&j| y[j] != 0.0).take(l).collect();
    Ok(normalized(y, &selected))
}

/// Long-only: up to `l` highest strictly positive scores.
pub fn size_lo(y: &[f64], l: usize) -> Result<WeightVector> {
    validate_scores(y, l)?;
    let order = order_desc_by(y.len(), |j| y[j]);
    let selected: Vec<usize> =
        order.into_iter().filter(|&j| y[j] > 0.0).take(l).collect();
    Ok(normalized(y, &selected))
}

/// Mixed: shorting is allowed only when the crisis regime is the most
/// likely next regime.
pub fn size_mx(y: &[f64], l: usize, p_next: &RegimeDistribution) -> Result<WeightVector> {
    if p_next.argmax() == 0 {
        size_los(y, l)
    } else {
        size_lo(y, l)
    }
}

/// Dispatch on the scheme; `mx` needs the next-month regime distribution.
pub fn apply_scheme(
    scheme: Scheme,
    y: &[f64],
    l: usize,
    p_next: Option<&RegimeDistribution>,
) -> Result<WeightVector> {
    match scheme {
        Scheme::Lns => size_lns(y, l),
        Scheme::Los => size_los(y, l),
        Scheme::Lo => size_lo(y, l),
        Scheme::Mx => {
            let p = p_next.ok_or_else(|| {
                Error::config("scheme mx needs the next-month regime distribution")
            })?;
            size_mx(y, l, p)
        }
    }
}

/// How the Black-Litterman view uncertainty is formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaSpec {
    /// Omega = diag(tau P Sigma P').
    ProportionalToPrior,
    /// Explicit per-view variances.
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlConfig {
    /// Prior scaling tau.
    pub tau: f64,
    pub omega: OmegaSpec,
    /// View pick matrix (views x assets); identity when absent.
    pub pick: Option<Vec<Vec<f64>>>,
}

impl Default for BlConfig {
    fn default() -> Self {
        BlConfig { tau: 0.05, omega: OmegaSpec::ProportionalToPrior, pick: None }
    }
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::data(format!("{what} is empty")));
    }
    let d = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::data(format!("{what} row {i} has wrong length")));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("{what} entry ({i}, {j}) is not finite")));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// Cholesky with one retry: a non-positive-definite matrix gets a single
/// trace-scaled ridge on the diagonal before failing.
fn pd_cholesky(mut m: DMatrix<f64>, what: &str) -> Result<(Cholesky<f64, Dyn>, DMatrix<f64>)> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok((chol, m));
    }
    let bump = 1e-8 * m.trace() / m.nrows() as f64;
    for i in 0..m.nrows() {
        m[(i, i)] += bump;
    }
    match m.clone().cholesky() {
        Some(chol) => Ok((chol, m)),
        None => Err(Error::numerical(format!("{what} is not positive definite"))),
    }
}

fn validate_covariance(sigma: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    let m = to_matrix(sigma, "covariance")?;
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::data(format!(
            "covariance is {}x{}, expected {d}x{d}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * (1.0 + m[(i, j)].abs()) {
                return Err(Error::data(format!("covariance is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(m)
}

/// Black-Litterman posterior mean. The prior is (mu, tau Sigma), the views
/// are q with uncertainty Omega under pick matrix P; the posterior is
/// mu + tau Sigma P' (P tau Sigma P' + Omega)^-1 (q - P mu), one
/// symmetric solve and no explicit inverse.
pub fn bl_posterior(mu: &[f64], sigma: &[Vec<f64>], q: &[f64], cfg: &BlConfig) -> Result<Vec<f64>> {
    let d = mu.len();
    if d == 0 {
        return Err(Error::data("no assets in prior mean"));
    }
    if let Some(j) = mu.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("prior mean entry {j} is not finite")));
    }
    if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
        return Err(Error::config(format!("tau {} must be positive", cfg.tau)));
    }
    let sigma = validate_covariance(sigma, d)?;
    let (_, sigma) = pd_cholesky(sigma, "covariance")?;

    let p = match &cfg.pick {
        Some(rows) => {
            let m = to_matrix(rows, "pick matrix")?;
            if m.ncols() != d {
                return Err(Error::data(format!(
                    "pick matrix has {} columns for {d} assets",
                    m.ncols()
                )));
            }
            m
        }
        None => DMatrix::identity(d, d),
    };
    let n_views = p.nrows();
    if q.len() != n_views {
        return Err(Error::data(format!("{} views for {n_views} pick rows", q.len())));
    }
    if let Some(j) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("view {j} is not finite")));
    }

    let tau_sigma = cfg.tau * &sigma;
    let p_tau_sigma_pt = &p * &tau_sigma * p.transpose();
    let mut system = p_tau_sigma_pt.clone();
    match &cfg.omega {
        OmegaSpec::ProportionalToPrior => {
            for i in 0..n_views {
                let v = p_tau_sigma_pt[(i, i)];
                if v <= 0.0 {
                    return Err(Error::numerical(format!(
                        "view {i} has nonpositive prior variance; its uncertainty is undefined"
                    )));
                }
                system[(i, i)] += v;
            }
        }
        OmegaSpec::Diagonal(vars) => {
            if vars.len() != n_views {
                return Err(Error::config(format!(
                    "{} omega entries for {n_views} views",
                    vars.len()
                )));
            }
            for (i, &v) in vars.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(format!("omega entry {i} must be positive")));
                }
                system[(i, i)] += v;
            }
        }
    }

    let mu_v = DVector::from_column_slice(mu);
    let q_v = DVector::from_column_slice(q);
    let innovation = q_v - &p * &mu_v;
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::numerical("view system is not positive definite"))?;
    let z = chol.solve(&innovation);
    let posterior = mu_v + tau_sigma * p.transpose() * z;
    Ok(posterior.iter().copied().collect())
}

/// The posterior mean vector held directly as weights, normalized by gross
/// exposure. This is the literal allocation reading of the posterior; the
/// default pipeline feeds posterior means through a sizing scheme instead.
pub fn bl_raw_weight_vector(posterior: &[f64]) -> Result<WeightVector> {
    if posterior.is_empty() {
        return Err(Error::data("no posterior means to hold"));
    }
    if let Some(j) = posterior.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("posterior mean {j} is not finite")));
    }
    let selected: Vec<usize> =
        (0..posterior.len()).filter(|&j| posterior[j] != 0.0).collect();
    Ok(normalized(posterior, &selected))
}

/// Mean-variance scores Sigma^-1 mu, intended to be fed through a sizing
/// scheme rather than held as raw weights.
pub fn mvo_scores(mu: &[f64], sigma: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = mu.len();
    if d == 0 {
        return Err(Error::data("no assets in mean vector"));
    }
    if let Some(j) = mu.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("mean entry {j} is not finite")));
    }
    let sigma = validate_covariance(sigma, d)?;
    let (chol, _) = pd_cholesky(sigma, "covariance")?;
    let scores = chol.solve(&DVector::from_column_slice(mu));
    Ok(scores.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const Y: [f64; 4] = [0.3, -0.2, 0.1, -0.4];

    #[test]
    fn lns_breadth_one_example() {
        let w = size_lns(&Y, 1).unwrap();
        assert_abs_diff_eq!(w.weights[0], 0.3 / 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(w.weights[3], -0.4 / 0.7, epsilon = 1e-12);
        assert_eq!(w.weights[1], 0.0);
        assert_eq!(w.weights[2], 0.0);
        assert!(!w.empty);
    }

    #[test]
    fn los_breadth_two_example() {
        let w = size_los(&Y, 2).unwrap();
        assert_abs_diff_eq!(w.weights[0], 0.3 / 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(w.weights[3], -0.4 / 0.7, epsilon = 1e-12);
        assert_eq!(w.weights[1], 0.0);
        assert_eq!(w.weights[2], 0.0);
    }

    #[test]
    fn lo_breadth_two_example() {
        let w = size_lo(&Y, 2).unwrap();
        assert_abs_diff_eq!(w.weights[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(w.weights[2], 0.25, epsilon = 1e-12);
        assert_eq!(w.weights[1], 0.0);
        assert_eq!(w.weights[3], 0.0);
    }

    #[test]
    fn lo_with_no_positive_scores_is_flagged_empty() {
        let w = size_lo(&[-0.1, -0.2, 0.0], 2).unwrap();
        assert!(w.empty);
        assert!(w.weights.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lns_takes_fewer_than_l_when_side_runs_out() {
        // Only one negative score exists; the short side holds just it.
        let y = [0.5, 0.2, -0.1, 0.3];
        let w = size_lns(&y, 2).unwrap();
        let selected: Vec<usize> =
            (0..4).filter(|&j| w.weights[j] != 0.0).collect();
        assert_eq!(selected, vec![0, 2, 3]);
        assert_abs_diff_eq!(w.gross(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mx_gates_shorting_on_crisis_regime() {
        let crisis = RegimeDistribution::new(vec![0.6, 0.4]).unwrap();
        let calm = RegimeDistribution::new(vec![0.3, 0.7]).unwrap();
        let w_crisis = size_mx(&Y, 2, &crisis).unwrap();
        let w_calm = size_mx(&Y, 2, &calm).unwrap();
        assert_eq!(w_crisis, size_los(&Y, 2).unwrap());
        assert_eq!(w_calm, size_lo(&Y, 2).unwrap());
    }

    #[test]
    fn ties_resolve_toward_earlier_assets() {
        let y = [0.2, 0.2, 0.2];
        let w = size_lo(&y, 2).unwrap();
        assert!(w.weights[0] > 0.0 && w.weights[1] > 0.0);
        assert_eq!(w.weights[2], 0.0);

        let y = [-0.3, 0.3, 0.3, -0.3];
        let w = size_los(&y, 2).unwrap();
        assert!(w.weights[0] < 0.0 && w.weights[1] > 0.0);
        assert_eq!(w.weights[2], 0.0);
        assert_eq!(w.weights[3], 0.0);

        // Short-side ties also resolve toward the earlier asset.
        let y = [0.5, -0.3, -0.3];
        let w = size_lns(&y, 1).unwrap();
        assert!(w.weights[1] < 0.0);
        assert_eq!(w.weights[2], 0.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(size_lo(&Y, 0), Err(Error::Config(_))));
        assert!(matches!(size_lo(&[0.1, f64::NAN], 1), Err(Error::Data(_))));
        assert!(matches!(
            apply_scheme(Scheme::Mx, &Y, 1, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gross_exposure_and_support_invariants_hold_randomly() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p = RegimeDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        for _ in 0..10_000 {
            let d = rng.random_range(2..8);
            let l = rng.random_range(1..=d);
            let y: Vec<f64> = (0..d)
                .map(|_| {
                    if rng.random_range(0..5) == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }
                })
                .collect();
            for scheme in Scheme::ALL {
                let w = apply_scheme(scheme, &y, l, Some(&p)).unwrap();
                let support = w.weights.iter().filter(|&&v| v != 0.0).count();
                if w.empty {
                    assert_eq!(support, 0);
                    continue;
                }
                assert_abs_diff_eq!(w.gross(), 1.0, epsilon = 1e-12);
                let cap = match scheme {
                    Scheme::Lns => 2 * l,
                    _ => l,
                };
                assert!(support <= cap, "{} support {support} > {cap}", scheme.name());
                // Signs follow scores.
                for (j, &v) in w.weights.iter().enumerate() {
                    if v != 0.0 {
                        assert_eq!(v.signum(), y[j].signum());
                    }
                }
            }
        }
    }

    #[test]
    fn weights_are_invariant_to_positive_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = RegimeDistribution::new(vec![0.2, 0.8]).unwrap();
        for _ in 0..1_000 {
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scaled_pow2: Vec<f64> = y.iter().map(|v| v * 64.0).collect();
            let scaled: Vec<f64> = y.iter().map(|v| v * 3.7).collect();
            for scheme in Scheme::ALL {
                let base = apply_scheme(scheme, &y, 2, Some(&p)).unwrap();
                let pow2 = apply_scheme(scheme, &scaled_pow2, 2, Some(&p)).unwrap();
                // Power-of-two scaling is exact in binary floating point.
                assert_eq!(base, pow2);
                let other = apply_scheme(scheme, &scaled, 2, Some(&p)).unwrap();
                for (a, b) in base.weights.iter().zip(&other.weights) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    fn identity(d: usize) -> Vec<Vec<f64>> {
        (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn bl_posterior_fixpoint_when_views_equal_prior() {
        let mu = [0.01, 0.02, -0.005];
        let sigma = vec![
            vec![0.04, 0.01, 0.00],
            vec![0.01, 0.09, 0.02],
            vec![0.00, 0.02, 0.16],
        ];
        let post = bl_posterior(&mu, &sigma, &mu, &BlConfig::default()).unwrap();
        for (a, b) in post.iter().zip(&mu) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn bl_posterior_moves_toward_views() {
        let mu = [0.01, 0.02];
        let q = [0.03, 0.00];
        let post =
            bl_posterior(&mu, &identity(2), &q, &BlConfig::default()).unwrap();
        assert!(post[0] > mu[0] && post[0] < q[0]);
        assert!(post[1] < mu[1] && post[1] > q[1]);
    }

    #[test]
    fn bl_posterior_with_huge_omega_recovers_prior() {
        let mu = [0.01, 0.02];
        let q = [0.5, -0.5];
        let cfg = BlConfig {
            tau: 0.05,
            omega: OmegaSpec::Diagonal(vec![1e12, 1e12]),
            pick: None,
        };
        let post = bl_posterior(&mu, &identity(2), &q, &cfg).unwrap();
        assert_abs_diff_eq!(post[0], mu[0], epsilon = 1e-8);
        assert_abs_diff_eq!(post[1], mu[1], epsilon = 1e-8);
    }

    /// Oracle: the textbook precision-weighted form
    /// [(tau Sigma)^-1 + P' Omega^-1 P]^-1 [(tau Sigma)^-1 mu + P' Omega^-1 q]
    /// with explicit inverses.
    fn bl_explicit_oracle(
        mu: &[f64],
        sigma: &[Vec<f64>],
        q: &[f64],
        tau: f64,
        omega_diag: &[f64],
        pick: &[Vec<f64>],
    ) -> Vec<f64> {
        let d = mu.len();
        let k = q.len();
        let sigma_m = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
        let p = DMatrix::from_fn(k, d, |i, j| pick[i][j]);
        let tau_sigma_inv = (tau * sigma_m).try_inverse().unwrap();
        let omega_inv = DMatrix::from_diagonal(&DVector::from_iterator(
            k,
            omega_diag.iter().map(|v| 1.0 / v),
        ));
        let a = &tau_sigma_inv + p.transpose() * &omega_inv * &p;
        let b = &tau_sigma_inv * DVector::from_column_slice(mu)
            + p.transpose() * &omega_inv * DVector::from_column_slice(q);
        (a.try_inverse().unwrap() * b).iter().copied().collect()
    }

    #[test]
    fn bl_posterior_matches_precision_weighted_oracle() {
        let mu = [0.012, -0.004, 0.02];
        let sigma = vec![
            vec![0.040, 0.012, -0.002],
            vec![0.012, 0.090, 0.010],
            vec![-0.002, 0.010, 0.060],
        ];
        let q = [0.03, 0.00];
        let pick = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, -1.0]];
        let omega = [0.002, 0.005];
        let cfg = BlConfig {
            tau: 0.05,
            omega: OmegaSpec::Diagonal(omega.to_vec()),
            pick: Some(pick.clone()),
        };
        let post = bl_posterior(&mu, &sigma, &q, &cfg).unwrap();
        let oracle = bl_explicit_oracle(&mu, &sigma, &q, 0.05, &omega, &pick);
        for (a, b) in post.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn bl_posterior_proportional_omega_matches_oracle() {
        let mu = [0.01, 0.02];
        let sigma = vec![vec![0.05, 0.01], vec![0.01, 0.08]];
        let q = [0.04, -0.01];
        let tau = 0.05;
        // Identity pick: Omega = diag(tau Sigma).
        let omega = [tau * 0.05, tau * 0.08];
        let post = bl_posterior(&mu, &sigma, &q, &BlConfig::default()).unwrap();
        let oracle = bl_explicit_oracle(&mu, &sigma, &q, tau, &omega, &identity(2));
        for (a, b) in post.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn bl_posterior_rejects_bad_inputs() {
        let mu = [0.01, 0.02];
        let asym = vec![vec![1.0, 0.5], vec![0.1, 1.0]];
        assert!(matches!(
            bl_posterior(&mu, &asym, &mu, &BlConfig::default()),
            Err(Error::Data(_))
        ));
        let cfg = BlConfig { tau: 0.0, ..BlConfig::default() };
        assert!(matches!(
            bl_posterior(&mu, &identity(2), &mu, &cfg),
            Err(Error::Config(_))
        ));
        // Indefinite covariance survives one ridge bump but not more.
        let indefinite = vec![vec![1.0, 0.0], vec![0.0, -5.0]];
        assert!(matches!(
            bl_posterior(&mu, &indefinite, &mu, &BlConfig::default()),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn near_singular_covariance_gets_one_ridge_bump() {
        // Rank-deficient but PSD: duplicated asset.
        let mu = [0.01, 0.01];
        let sigma = vec![vec![0.04, 0.04], vec![0.04, 0.04]];
        let post = bl_posterior(&mu, &sigma, &[0.02, 0.02], &BlConfig::default());
        assert!(post.is_ok());
    }

    #[test]
    fn raw_posterior_weights_normalize_by_gross() {
        let w = bl_raw_weight_vector(&[0.3, -0.2, 0.1, -0.4]).unwrap();
        // Gross exposure is 1.0, so the weights are the posterior itself.
        assert_eq!(w.weights, vec![0.3, -0.2, 0.1, -0.4]);
        assert!(!w.empty);

        let half = bl_raw_weight_vector(&[0.15, -0.1, 0.05, -0.2]).unwrap();
        for (a, b) in half.weights.iter().zip(&w.weights) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }

        let zero = bl_raw_weight_vector(&[0.0, 0.0]).unwrap();
        assert!(zero.empty);
        assert_eq!(zero.weights, vec![0.0, 0.0]);
    }

    #[test]
    fn mvo_scores_match_hand_inverse() {
        // Sigma = I: scores are means.
        let mu = [0.02, -0.01];
        let scores = mvo_scores(&mu, &identity(2)).unwrap();
        assert_abs_diff_eq!(scores[0], 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(scores[1], -0.01, epsilon = 1e-12);

        // Sigma = 2I halves them.
        let sigma = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        let scores = mvo_scores(&mu, &sigma).unwrap();
        assert_abs_diff_eq!(scores[0], 0.01, epsilon = 1e-12);

        // Correlated inverse, hand-computed: Sigma = [[1, .5], [.5, 1]],
        // Sigma^-1 = (4/3) [[1, -.5], [-.5, 1]].
        let sigma = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let scores = mvo_scores(&[0.03, 0.00], &sigma).unwrap();
        assert_abs_diff_eq!(scores[0], 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(scores[1], -0.02, epsilon = 1e-12);
    }
}
