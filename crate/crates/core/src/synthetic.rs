//! Deterministic synthetic fixtures standing in for external datasets.
//!
//! The reference experiments run on data that cannot be bundled: FRED-MD
//! vintages drift month to month, and the ETF return panel comes from a
//! proprietary vendor. The test suite therefore runs on synthetic
//! stand-ins generated here with fixed seeds and full-precision number
//! formatting, so regenerating the files reproduces the committed
//! fixtures byte for byte.
//!
//! Three fixtures:
//!
//! * a FRED-MD-shaped macro panel (758 months, 127 series, mixed
//!   transform codes, sidecar group map, realistic missing data) built
//!   from a latent model with 5 persistent regime directions plus rare
//!   high-norm crisis months, calibrated so the ingest pipeline keeps 61
//!   components at the 0.95 threshold and the cosine elbow lands on 5;
//! * a monthly ETF return panel for the ten sector tickers (Feb 2000
//!   through Dec 2022) with planted bear windows, for end-to-end runs;
//! * a 120-month walk-forward pair (factors + assets) with two
//!   mean-shifted phases and crisis bursts, where regime-aware forecasts
//!   genuinely beat permuted-label controls.
//!
//! The macro panel's geometry needs care on two fronts.
//!
//! First, standardization centers every column. Centered one-hot regime
//! indicators with equal masses collapse onto a regular simplex (pairwise
//! direction cosines -1/4), and on that geometry the inertia curve of
//! spherical k-means has its largest curvature at k = 2, never at the
//! true cluster count. The generator therefore keeps the five regime
//! directions in a positive orthogonal cone and moves the entire
//! centering mass onto the crisis months. Each crisis burst opposes a
//! single rotating axis with an amplitude that exactly balances that
//! axis's regime mean series by series, so crisis months are extreme in
//! norm (the stage-1 outlier split) while their direction is a cone
//! antipode: they attach to any spherical centroid at a near-constant
//! cost and so leave the inertia curvature of the typical cones intact.
//! Small zero-sum off-axis jitter keeps same-axis crisis months from
//! being perfectly co-directional, which would otherwise let a sixth
//! centroid claim them.
//!
//! Second, the 0.95 variance crossing must land on component 61 without
//! drowning the cones. Independent per-cell noise is useless for this:
//! its sample spectrum spreads over a wide Marchenko-Pastur bulk, so
//! placing the crossing inside the bulk demands so much total noise that
//! the cone directions wash out. The noise here is instead a fixed
//! fraction of every column's variance, mixed through exactly orthogonal
//! cosine waves in time and an orthonormal basis of the complement of
//! the axis blocks in series space. Both factors of the mix are exactly
//! orthogonal, so after standardization the noise block contributes one
//! flat eigenvalue shelf, and the crossing position follows from counting
//! components rather than from tuning an amplitude against a random
//! spectrum edge.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::backtest::control::mix_seed;
use crate::error::Result;

pub const MACRO_FIXTURE: &str = "fred_md_synthetic.csv";
pub const GROUPS_FIXTURE: &str = "fred_md_groups.csv";
pub const ETF_FIXTURE: &str = "etf_returns.csv";
pub const WALK_FACTORS_FIXTURE: &str = "walk_factors.csv";
pub const WALK_ASSETS_FIXTURE: &str = "walk_assets.csv";

pub const ETF_TICKERS: [&str; 10] =
    ["SPY", "XLB", "XLE", "XLF", "XLI", "XLK", "XLP", "XLU", "XLV", "XLY"];

const MACRO_SEED: u64 = 9_0210;
const ETF_SEED: u64 = 7_7031;
const WALK_SEED: u64 = 4_4117;

// Macro panel shape.
const N_MONTHS: usize = 758; // 1959-12 through 2023-01 inclusive.
const N_SERIES: usize = 127;
const N_REGIMES: usize = 5;

// Latent amplitudes. The regime deflection sets the cone scale; the
// crisis amplitude is derived from the schedule (exact mean cancellation
// per axis); CRISIS_JITTER scatters crisis months off the pure antipode;
// CRISIS_DEPTH varies burst severity without moving the direction.
const REG_AMP: f64 = 1.0;
const CRISIS_JITTER: f64 = 0.2;
const CRISIS_DEPTH: f64 = 0.25;

// Wave-noise layout. Every column gets NOISE_SHARE of its variance from
// WAVE_COUNT shared cosine waves, one per basis direction of the
// orthogonal complement of the five axis blocks (127 - 5 = 122). After
// standardization the noise block is a flat shelf of equal eigenvalues
// (two fall away with the dropped sparse columns), so the position of
// the 0.95 cumulative-variance crossing follows from counting shelf
// components past the five structure components and the two small
// imputation-dust components. The value below parks the crossing on
// component 61 with about half a shelf step of slack on either side.
const NOISE_SHARE: f64 = 0.1131;
const WAVE_COUNT: usize = N_SERIES - N_REGIMES;
const MAX_FREQ: usize = 700;

fn month_seq(start_year: i32, start_month: u32, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut y = start_year;
    let mut m = start_month;
    for _ in 0..n {
        out.push(NaiveDate::from_ymd_opt(y, m, 1).unwrap());
        m += 1;
        if m > 12 {
            m = 1;
            y += 1;
        }
    }
    out
}

fn fred_date(d: NaiveDate) -> String {
    format!("{}/1/{}", d.month(), d.year())
}

/// Latent month state: a persistent regime, or a crisis month opposing
/// one regime axis (both 0-indexed, 0..N_REGIMES).
#[derive(Clone, Copy, PartialEq)]
enum Latent {
    Regime(usize),
    Crisis(usize),
}

/// Persistent regime runs cycling through all regimes, with a 2 or 3
/// month crisis burst after every third run; burst axes rotate so every
/// regime's mean gets cancelled by a similar number of crisis months.
/// Run lengths follow a rotating 10..14 pattern (plus or minus one month
/// of jitter), so each regime accumulates a near-equal share of the
/// sample; badly unbalanced cluster masses would distort both the
/// spectrum and the elbow curve.
fn build_schedule(n: usize, rng: &mut ChaCha8Rng) -> Vec<Latent> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0usize;
    while out.len() < n {
        let run = 10 + (i + i / N_REGIMES) % N_REGIMES + rng.random_range(0..=2);
        for _ in 0..run {
            if out.len() < n {
                out.push(Latent::Regime(i % N_REGIMES));
            }
        }
        if i % 3 == 2 {
            let burst = rng.random_range(2..=3);
            let axis = (i / 3) % N_REGIMES;
            for _ in 0..burst {
                if out.len() < n {
                    out.push(Latent::Crisis(axis));
                }
            }
        }
        i += 1;
    }
    out
}

/// Transform codes cycle through a FRED-MD-like mix; all seven appear.
fn tcode_for(j: usize) -> u8 {
    const CYCLE: [u8; 15] = [5, 2, 5, 1, 6, 5, 4, 2, 5, 7, 5, 2, 3, 5, 6];
    CYCLE[j % 15]
}

/// Invert a transform code: build a raw series whose transformed image is
/// `z` (up to the leading observations the transform consumes).
fn invert_tcode(z: &[f64], tcode: u8) -> Vec<f64> {
    let n = z.len();
    let mut raw = Vec::with_capacity(n);
    match tcode {
        1 => raw.extend_from_slice(z),
        2 => {
            // x_t = x_{t-1} + z_t.
            let mut x = 50.0;
            raw.push(x);
            for &v in &z[1..] {
                x += v;
                raw.push(x);
            }
        }
        3 => {
            // Double integration of z.
            let mut d = 0.0;
            let mut x = 200.0;
            raw.push(x);
            for &v in &z[1..] {
                d += v;
                x += d;
                raw.push(x);
            }
        }
        4 => raw.extend(z.iter().map(|&v| v.exp())),
        5 => {
            // x_t = x_{t-1} exp(z_t).
            let mut x = 100.0f64;
            raw.push(x);
            for &v in &z[1..] {
                x *= v.exp();
                raw.push(x);
            }
        }
        6 => {
            // ln x is the double integral of z.
            let mut d = 0.0;
            let mut lx = 1000.0f64.ln();
            raw.push(lx.exp());
            for &v in &z[1..] {
                d += v;
                lx += d;
                raw.push(lx.exp());
            }
        }
        7 => {
            // x_t/x_{t-1} - 1 integrates z around a small positive base.
            let mut q = 0.01;
            let mut x = 100.0;
            raw.push(x);
            for &v in &z[1..] {
                q += v;
                x *= 1.0 + q;
                raw.push(x);
            }
        }
        _ => unreachable!("tcode outside 1..7"),
    }
    raw
}

/// Magnitude the latent signal is scaled to before inversion, chosen per
/// code so the raw series stays in a numerically comfortable range.
fn tcode_scale(tcode: u8) -> f64 {
    match tcode {
        1 => 1.0,
        2 => 0.5,
        3 => 0.05,
        4 => 0.2,
        5 => 0.01,
        6 => 0.0002,
        7 => 0.0005,
        _ => unreachable!(),
    }
}

/// Count of series loading on each regime axis (series j tracks axis
/// j mod N_REGIMES).
fn axis_size(a: usize) -> f64 {
    (0..N_SERIES).filter(|j| j % N_REGIMES == a).count() as f64
}

/// Two-pass Gram-Schmidt of `v` against an orthonormal basis followed by
/// unit normalization (the second pass keeps f64 orthogonality tight).
/// `None` if `v` lies numerically inside the span.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> Option<()> {
    for _ in 0..2 {
        for u in basis {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= d * y;
            }
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1e-8 {
        return None;
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Some(())
}

/// Orthonormal basis of the complement of the five axis-block indicator
/// directions in series space, via Gram-Schmidt over seeded Gaussian
/// draws. Mixing the waves through it keeps the noise exactly outside
/// the regime directions with an exactly flat spectrum.
fn complement_basis(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut basis: Vec<Vec<f64>> = (0..N_REGIMES)
        .map(|a| {
            let w = 1.0 / axis_size(a).sqrt();
            (0..N_SERIES).map(|j| if j % N_REGIMES == a { w } else { 0.0 }).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(WAVE_COUNT);
    while out.len() < WAVE_COUNT {
        let mut v: Vec<f64> = (0..N_SERIES).map(|_| unit.sample(rng)).collect();
        if orthonormalize(&mut v, &basis).is_some() {
            basis.push(v.clone());
            out.push(v);
        }
    }
    out
}

/// The macro panel CSV (FRED-MD layout) and its sidecar group map.
pub fn macro_fixture_csv() -> (String, String) {
    let dates = month_seq(1959, 12, N_MONTHS);
    let mut schedule_rng = ChaCha8Rng::seed_from_u64(mix_seed(MACRO_SEED, 1));
    let schedule = build_schedule(N_MONTHS, &mut schedule_rng);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let head = crate::ingest::TRANSFORM_HEAD_ROWS;
    let kept_n = (N_MONTHS - head) as f64;

    // Typical-month and crisis-month counts per axis over the rows that
    // survive the transform head-drop; the cancellation below must hold
    // on exactly the window the pipeline standardizes.
    let kept = &schedule[head..];
    let mut axis_months = [0.0f64; N_REGIMES];
    let mut crisis_idx: [Vec<usize>; N_REGIMES] = Default::default();
    for s in kept {
        if let Latent::Regime(g) = s {
            axis_months[*g] += 1.0;
        }
    }
    for (t, s) in schedule.iter().enumerate() {
        if let Latent::Crisis(a) = s {
            assert!(t >= head, "crisis month inside the transform head");
            crisis_idx[*a].push(t);
        }
    }

    // Per-month axis coefficients. Typical months deflect their own axis
    // by +1. A crisis month opposing axis a carries -K[a] * depth on that
    // axis, with K[a] = typical months / crisis months for the axis and
    // depths renormalized per axis, so centering removes the cone means
    // exactly; its off-axis jitter is de-meaned per axis pair and so adds
    // no net mass anywhere.
    let mut coef: Vec<[f64; N_REGIMES]> = schedule
        .iter()
        .map(|s| {
            let mut c = [0.0; N_REGIMES];
            if let Latent::Regime(g) = s {
                c[*g] = 1.0;
            }
            c
        })
        .collect();
    let mut crisis_rng = ChaCha8Rng::seed_from_u64(mix_seed(MACRO_SEED, 2));
    for a in 0..N_REGIMES {
        let idx = &crisis_idx[a];
        let c_a = idx.len() as f64;
        let k_a = axis_months[a] / c_a;
        let depths: Vec<f64> = idx
            .iter()
            .map(|_| (1.0 + CRISIS_DEPTH * unit.sample(&mut crisis_rng)).max(0.4))
            .collect();
        let depth_sum: f64 = depths.iter().sum();
        for (&t, &d) in idx.iter().zip(&depths) {
            coef[t][a] = -k_a * d * c_a / depth_sum;
        }
        for b in 0..N_REGIMES {
            if b == a {
                continue;
            }
            let draws: Vec<f64> = idx.iter().map(|_| unit.sample(&mut crisis_rng)).collect();
            let mean = draws.iter().sum::<f64>() / c_a;
            for (&t, &z) in idx.iter().zip(&draws) {
                coef[t][b] = k_a * CRISIS_JITTER * (z - mean);
            }
        }
    }

    // Realized per-column structure variance for each axis (columns of an
    // axis share it exactly; loadings cancel in standardization).
    let c_struct: [f64; N_REGIMES] = std::array::from_fn(|a| {
        coef[head..].iter().map(|c| (REG_AMP * c[a]).powi(2)).sum::<f64>() / kept_n
    });

    // Per-series loadings: each series tracks one regime axis.
    let mut load_rng = ChaCha8Rng::seed_from_u64(mix_seed(MACRO_SEED, 3));
    let loads: Vec<f64> = (0..N_SERIES).map(|_| load_rng.random_range(0.75..1.25)).collect();

    // Shared noise: WAVE_COUNT cosine waves on the surviving window,
    // Gram-Schmidt'ed against the five realized coefficient sequences
    // (and each other) so the in-sample covariance between noise and
    // structure vanishes identically; without that the degenerate noise
    // shelf tilts and the crossing drifts. The coefficient sequences sum
    // to zero by the cancellation above, so the orthogonalized waves stay
    // exactly zero-sum and centering ignores them.
    let mut time_basis: Vec<Vec<f64>> = Vec::with_capacity(N_REGIMES + WAVE_COUNT);
    for a in 0..N_REGIMES {
        let mut v: Vec<f64> = coef[head..].iter().map(|c| c[a]).collect();
        orthonormalize(&mut v, &time_basis).expect("independent coefficient sequences");
        time_basis.push(v);
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(MACRO_SEED, 4));
    let mut freqs: Vec<usize> = (1..=MAX_FREQ).collect();
    for i in 0..WAVE_COUNT {
        let j = noise_rng.random_range(i..freqs.len());
        freqs.swap(i, j);
    }
    freqs.truncate(WAVE_COUNT);
    for &f in &freqs {
        let mut v: Vec<f64> = (0..N_MONTHS - head)
            .map(|tk| {
                let u = (tk as f64 + 0.5) / kept_n;
                (std::f64::consts::PI * f as f64 * u).cos()
            })
            .collect();
        orthonormalize(&mut v, &time_basis).expect("independent wave frequencies");
        time_basis.push(v);
    }
    let waves = &time_basis[N_REGIMES..];

    // Mix the waves through the complement basis, one wave per basis
    // direction. The amplitude per axis pins the noise at NOISE_SHARE of
    // every column's variance (a complement-basis column has squared
    // norm 1 - 1/axis_size because the basis completes the five
    // indicator directions). Head rows get no noise; the transform drops
    // them anyway.
    let mix = complement_basis(&mut noise_rng);
    let scale_t = kept_n.sqrt();
    let mut noise_base = vec![vec![0.0f64; N_SERIES]; N_MONTHS];
    for (tk, row) in noise_base[head..].iter_mut().enumerate() {
        for (wave, g) in waves.iter().zip(&mix) {
            let w = scale_t * wave[tk];
            for (x, &gv) in row.iter_mut().zip(g) {
                *x += w * gv;
            }
        }
    }
    let noise_amp: [f64; N_REGIMES] = std::array::from_fn(|a| {
        let c_noise = NOISE_SHARE / (1.0 - NOISE_SHARE) * c_struct[a];
        (c_noise / (1.0 - 1.0 / axis_size(a))).sqrt()
    });

    // Latent signal per month and series, then tcode inversion.
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(N_SERIES);
    for (j, &load) in loads.iter().enumerate() {
        let axis = j % N_REGIMES;
        let tcode = tcode_for(j);
        let scale = tcode_scale(tcode);
        let z: Vec<f64> = (0..N_MONTHS)
            .map(|t| {
                let sig = REG_AMP * coef[t][axis] + noise_amp[axis] * noise_base[t][j];
                scale * load * sig
            })
            .collect();
        columns.push(invert_tcode(&z, tcode));
    }

    // Missing data. Two series miss so much history they must be dropped;
    // several have realistic shorter leading gaps; a few have scattered
    // holes that exercise imputation.
    let mut missing_rng = ChaCha8Rng::seed_from_u64(mix_seed(MACRO_SEED, 5));
    let mut missing = vec![vec![false; N_SERIES]; N_MONTHS];
    for &j in &[41usize, 90] {
        for row in missing.iter_mut().take(220) {
            row[j] = true;
        }
    }
    for &j in &[7usize, 19, 33, 55, 77, 101, 118] {
        let lead = 20 + (j * 3) % 60;
        for row in missing.iter_mut().take(lead) {
            row[j] = true;
        }
    }
    for j in (4..N_SERIES).step_by(11) {
        for _ in 0..4 {
            let t = missing_rng.random_range(2..N_MONTHS);
            missing[t][j] = true;
        }
    }

    let mut csv = String::new();
    csv.push_str("sasdate");
    for j in 0..N_SERIES {
        let _ = write!(csv, ",M{:03}", j + 1);
    }
    csv.push('\n');
    csv.push_str("Transform:");
    for j in 0..N_SERIES {
        let _ = write!(csv, ",{}", tcode_for(j));
    }
    csv.push('\n');
    for (t, date) in dates.iter().enumerate() {
        csv.push_str(&fred_date(*date));
        for (j, col) in columns.iter().enumerate() {
            if missing[t][j] {
                csv.push(',');
            } else {
                let _ = write!(csv, ",{}", col[t]);
            }
        }
        csv.push('\n');
    }

    let mut groups = String::from("series_id,group_id\n");
    for j in 0..N_SERIES {
        let _ = writeln!(groups, "M{:03},{}", j + 1, (j % 7) + 1);
    }
    (csv, groups)
}

/// Monthly sector-ETF returns, Feb 2000 through Dec 2022 (275 months),
/// with planted bear windows so the series have realistic drawdowns.
pub fn etf_fixture_csv() -> String {
    let n = 275;
    let dates = month_seq(2000, 2, n);
    let mut rng = ChaCha8Rng::seed_from_u64(ETF_SEED);
    let unit = Normal::new(0.0, 1.0).unwrap();

    let bear = |d: NaiveDate| -> bool {
        let ym = (d.year(), d.month());
        ((2000, 9)..=(2002, 9)).contains(&ym)
            || ((2007, 11)..=(2009, 3)).contains(&ym)
            || ((2020, 2)..=(2020, 3)).contains(&ym)
            || ((2022, 1)..=(2022, 9)).contains(&ym)
    };
    let betas = [1.0, 1.05, 1.1, 1.15, 1.0, 1.2, 0.75, 0.7, 0.8, 1.1];
    let drifts = [0.0, -0.001, 0.001, -0.002, 0.0, 0.002, 0.001, 0.0, 0.002, 0.001];
    let idio = [0.003, 0.022, 0.032, 0.026, 0.018, 0.028, 0.014, 0.018, 0.016, 0.02];

    let mut csv = String::from("date");
    for t in ETF_TICKERS {
        csv.push(',');
        csv.push_str(t);
    }
    csv.push('\n');
    for d in dates {
        let market = if bear(d) {
            -0.018 + 0.055 * unit.sample(&mut rng)
        } else {
            0.009 + 0.035 * unit.sample(&mut rng)
        };
        csv.push_str(&d.format("%Y-%m-%d").to_string());
        for j in 0..ETF_TICKERS.len() {
            let r = drifts[j] + betas[j] * market + idio[j] * unit.sample(&mut rng);
            let _ = write!(csv, ",{r}");
        }
        csv.push('\n');
    }
    csv
}

// Walk fixture shape: ten years of monthly data with 12-month phases.
const WALK_MONTHS: usize = 120;
const WALK_CRISIS: [usize; 8] = [18, 19, 44, 45, 70, 71, 96, 97];

/// The 120-month walk-forward fixture: a 4-factor panel with two
/// mean-shifted phases (plus crisis bursts) and ten asset return series
/// whose monthly means flip with the phase. Regime-aware forecasts have a
/// real edge here; permuting the labels destroys it.
pub fn walk_fixture_csv() -> (String, String) {
    let dates = month_seq(2010, 1, WALK_MONTHS);
    let mut rng = ChaCha8Rng::seed_from_u64(WALK_SEED);
    let unit = Normal::new(0.0, 1.0).unwrap();

    let phase = |t: usize| (t / 12) % 2;
    let crisis = |t: usize| WALK_CRISIS.contains(&t);

    let mut factors = String::from("date,f1,f2,f3,f4\n");
    for (t, d) in dates.iter().enumerate() {
        let base: [f64; 4] = if crisis(t) {
            [12.0, -9.0, 2.5, 1.0]
        } else if phase(t) == 0 {
            [2.0, 0.3, 0.0, -0.2]
        } else {
            [-0.3, 2.0, 0.4, 0.1]
        };
        factors.push_str(&d.format("%Y-%m-%d").to_string());
        for b in base {
            let _ = write!(factors, ",{}", b + 0.25 * unit.sample(&mut rng));
        }
        factors.push('\n');
    }

    let mut assets = String::from("date");
    for t in ETF_TICKERS {
        assets.push(',');
        assets.push_str(t);
    }
    assets.push('\n');
    for (t, d) in dates.iter().enumerate() {
        assets.push_str(&d.format("%Y-%m-%d").to_string());
        for j in 0..ETF_TICKERS.len() {
            let mean = if crisis(t) {
                -0.05
            } else {
                // The first five assets earn in phase 0, the last five in
                // phase 1.
                let favored = (j < 5) == (phase(t) == 0);
                if favored {
                    0.015
                } else {
                    -0.005
                }
            };
            let _ = write!(assets, ",{}", mean + 0.02 * unit.sample(&mut rng));
        }
        assets.push('\n');
    }
    (factors, assets)
}

/// Write every fixture into `dir` with its canonical file name.
pub fn write_fixtures(dir: &Path) -> Result<()> {
    let (macro_csv, groups_csv) = macro_fixture_csv();
    std::fs::write(dir.join(MACRO_FIXTURE), macro_csv)?;
    std::fs::write(dir.join(GROUPS_FIXTURE), groups_csv)?;
    std::fs::write(dir.join(ETF_FIXTURE), etf_fixture_csv())?;
    let (walk_factors, walk_assets) = walk_fixture_csv();
    std::fs::write(dir.join(WALK_FACTORS_FIXTURE), walk_factors)?;
    std::fs::write(dir.join(WALK_ASSETS_FIXTURE), walk_assets)?;
    Ok(())
}
