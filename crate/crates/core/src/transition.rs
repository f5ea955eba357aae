//! Empirical regime transition matrix, one-step propagation, and the
//! conditional (given-a-switch) matrix with its graph export.
//!
//! Estimation counts observed month-to-month moves. The denominator for row
//! i is the number of occurrences of regime i that have a successor month,
//! which makes every observed row exactly stochastic; regimes never seen in
//! the window get a uniform row so propagation stays defined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regime::{RegimeDistribution, RegimeLabelSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// Row-stochastic (r+1) x (r+1).
    pub matrix: Vec<Vec<f64>>,
    /// Observed transition counts feeding each entry.
    pub counts: Vec<Vec<u64>>,
    /// States whose rows were unobserved and defaulted to uniform.
    pub uniform_rows: Vec<usize>,
}

impl TransitionMatrix {
    pub fn n_states(&self) -> usize {
        self.matrix.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::data(format!("transition row {i} has wrong length")));
            }
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::data(format!("invalid probability in transition row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::data(format!("transition row {i} sums to {sum}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTransitionMatrix {
    /// Zero diagonal; rows sum to 1 where the source regime ever switches.
    pub matrix: Vec<Vec<f64>>,
    /// Rows that were absorbing (diagonal 1) and came out all zero.
    pub absorbing_rows: Vec<usize>,
}

/// Estimate with add-alpha smoothing (alpha = 0 reproduces the raw counts;
/// the paper's matrices contain exact zeros, so 0 is the default).
pub fn estimate_transition_smoothed(
    labels: &[usize],
    n_regimes: usize,
    alpha: f64,
) -> Result<TransitionMatrix> {
    if labels.len() < 2 {
        return Err(Error::data(format!(
            "need at least 2 labels to estimate transitions, got {}",
            labels.len()
        )));
    }
    if alpha < 0.0 {
        return Err(Error::config(format!("smoothing alpha {alpha} must be nonnegative")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_regimes) {
        return Err(Error::config(format!(
            "label {bad} outside configured {n_regimes} regimes"
        )));
    }
    let n = n_regimes;
    let mut counts = vec![vec![0u64; n]; n];
    for w in labels.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    let mut matrix = vec![vec![0.0; n]; n];
    let mut uniform_rows = Vec::new();
    for i in 0..n {
        let out: u64 = counts[i].iter().sum();
        if out == 0 && alpha == 0.0 {
            log::warn!("regime {i} never observed with a successor; using a uniform row");
            uniform_rows.push(i);
            for j in 0..n {
                matrix[i][j] = 1.0 / n as f64;
            }
        } else {
            let denom = out as f64 + alpha * n as f64;
            for j in 0..n {
                matrix[i][j] = (counts[i][j] as f64 + alpha) / denom;
            }
        }
    }
    let out = TransitionMatrix { matrix, counts, uniform_rows };
    out.validate()?;
    Ok(out)
}

pub fn estimate_transition(labels: &[usize], n_regimes: usize) -> Result<TransitionMatrix> {
    estimate_transition_smoothed(labels, n_regimes, 0.0)
}

/// Convenience overload on a label series.
pub fn estimate_transition_series(labels: &RegimeLabelSeries) -> Result<TransitionMatrix> {
    labels.validate()?;
    estimate_transition(&labels.labels, labels.n_regimes)
}

/// Probability of landing in each regime given that a switch happens:
/// off-diagonal entries divided by (1 - diagonal), diagonal zeroed.
/// Absorbing rows (diagonal 1) become all-zero.
pub fn conditional_transition(e: &TransitionMatrix) -> ConditionalTransitionMatrix {
    let n = e.n_states();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut absorbing_rows = Vec::new();
    for i in 0..n {
        let stay = e.matrix[i][i];
        let leave = 1.0 - stay;
        if leave <= 0.0 {
            log::warn!("regime {i} is absorbing; conditional row is all zero");
            absorbing_rows.push(i);
            continue;
        }
        for j in 0..n {
            if j != i {
                matrix[i][j] = e.matrix[i][j] / leave;
            }
        }
    }
    ConditionalTransitionMatrix { matrix, absorbing_rows }
}

/// One-step distribution update: renormalize p, multiply through E,
/// renormalize again.
pub fn propagate(p: &RegimeDistribution, e: &TransitionMatrix) -> Result<RegimeDistribution> {
    let n = e.n_states();
    if p.probs.len() != n {
        return Err(Error::data(format!(
            "distribution over {} regimes, matrix over {n}",
            p.probs.len()
        )));
    }
    let mass: f64 = p.probs.iter().sum();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::data(format!("distribution has invalid mass {mass}")));
    }
    let scaled: Vec<f64> = p.probs.iter().map(|&v| v / mass).collect();
    let mut next = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            next[j] += scaled[i] * e.matrix[i][j];
        }
    }
    let total: f64 = next.iter().sum();
    for v in &mut next {
        *v /= total;
    }
    RegimeDistribution::new(next)
}

/// Square matrix as CSV: a `from` column followed by one column per
/// destination state. Works for raw and conditional matrices alike.
pub fn matrix_csv(matrix: &[Vec<f64>], names: &[String]) -> Result<String> {
    if names.len() != matrix.len() {
        return Err(Error::data(format!(
            "{} names for {} matrix rows",
            names.len(),
            matrix.len()
        )));
    }
    let mut out = String::from("from");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (name, row) in names.iter().zip(matrix) {
        out.push_str(name);
        for p in row {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Heatmap-ready long format: one `from,to,prob` row per matrix entry.
pub fn matrix_long_csv(matrix: &[Vec<f64>], names: &[String]) -> Result<String> {
    if names.len() != matrix.len() {
        return Err(Error::data(format!(
            "{} names for {} matrix rows",
            names.len(),
            matrix.len()
        )));
    }
    let mut out = String::from("from,to,prob\n");
    for (i, row) in matrix.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            out.push_str(&format!("{},{},{p}\n", names[i], names[j]));
        }
    }
    Ok(out)
}

/// DOT digraph over the conditional matrix; zero-weight edges are omitted
/// and each edge label carries its probability.
pub fn export_graph(c: &ConditionalTransitionMatrix, names: &[String]) -> Result<String> {
    let n = c.matrix.len();
    if names.len() != n {
        return Err(Error::data(format!("{} names for {n} regimes", names.len())));
    }
    let mut out = String::from("digraph regimes {\n    rankdir=LR;\n");
    for name in names {
        out.push_str(&format!("    \"{name}\";\n"));
    }
    for i in 0..n {
        for j in 0..n {
            let p = c.matrix[i][j];
            if p > 0.0 {
                out.push_str(&format!(
                    "    \"{}\" -> \"{}\" [label=\"{p:.3}\", weight={p}];\n",
                    names[i], names[j]
                ));
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_four_transitions() {
        let e = estimate_transition(&[0, 0, 1, 1, 0], 2).unwrap();
        assert_eq!(e.matrix, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(e.counts, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn absorbing_single_regime() {
        let e = estimate_transition(&[0, 0, 0, 0], 1).unwrap();
        assert_eq!(e.matrix, vec![vec![1.0]]);
    }

    #[test]
    fn alternating_sequence() {
        let e = estimate_transition(&[0, 1, 0, 1], 2).unwrap();
        assert_eq!(e.matrix[0][1], 1.0);
        assert_eq!(e.matrix[1][0], 1.0);
        assert_eq!(e.matrix[0][0], 0.0);
    }

    #[test]
    fn unobserved_regime_gets_uniform_row() {
        let e = estimate_transition(&[0, 1, 0], 3).unwrap();
        assert_eq!(e.uniform_rows, vec![2]);
        assert_eq!(e.matrix[2], vec![1.0 / 3.0; 3]);
        // Row sums still stochastic.
        e.validate().unwrap();
    }

    #[test]
    fn counts_sum_to_out_count() {
        let labels = [0, 1, 2, 1, 1, 0, 2, 2, 0];
        let e = estimate_transition(&labels, 3).unwrap();
        for i in 0..3 {
            let expected = labels
                .windows(2)
                .filter(|w| w[0] == i)
                .count() as u64;
            let got: u64 = e.counts[i].iter().sum();
            assert_eq!(got, expected, "row {i}");
        }
    }

    #[test]
    fn smoothing_removes_zeros() {
        let raw = estimate_transition(&[0, 1, 0, 1], 2).unwrap();
        assert_eq!(raw.matrix[0][0], 0.0);
        let smoothed = estimate_transition_smoothed(&[0, 1, 0, 1], 2, 0.5).unwrap();
        assert!(smoothed.matrix[0][0] > 0.0);
        smoothed.validate().unwrap();
    }

    #[test]
    fn conditional_divides_by_leave_probability() {
        let e = TransitionMatrix {
            matrix: vec![
                vec![0.8, 0.1, 0.1],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.6, 0.4],
            ],
            counts: vec![vec![0; 3]; 3],
            uniform_rows: vec![],
        };
        let c = conditional_transition(&e);
        assert_eq!(c.matrix[0][0], 0.0);
        assert!((c.matrix[0][1] - 0.5).abs() < 1e-12);
        assert!((c.matrix[0][2] - 0.5).abs() < 1e-12);
        // Row 1 never leaves: conditional row is zero and flagged.
        assert_eq!(c.matrix[1], vec![0.0, 0.0, 0.0]);
        assert_eq!(c.absorbing_rows, vec![1]);
        // Row 2 leaves with probability 0.6, always into regime 1.
        assert_eq!(c.matrix[2], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn conditional_reconstructs_original() {
        let e = estimate_transition(&[0, 1, 2, 0, 0, 1, 1, 2, 0, 1], 3).unwrap();
        let c = conditional_transition(&e);
        for i in 0..3 {
            let diag = e.matrix[i][i];
            if diag >= 1.0 {
                continue;
            }
            for j in 0..3 {
                if i != j {
                    let rebuilt = c.matrix[i][j] * (1.0 - diag);
                    assert!((rebuilt - e.matrix[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    fn two_state_chain() -> TransitionMatrix {
        TransitionMatrix {
            matrix: vec![vec![0.9, 0.1], vec![0.5, 0.5]],
            counts: vec![vec![9, 1], vec![5, 5]],
            uniform_rows: vec![],
        }
    }

    #[test]
    fn propagate_basis_vector_selects_row() {
        let p = RegimeDistribution::new(vec![1.0, 0.0]).unwrap();
        let next = propagate(&p, &two_state_chain()).unwrap();
        assert_eq!(next.probs, vec![0.9, 0.1]);
    }

    #[test]
    fn propagate_identity_is_fixpoint() {
        let e = TransitionMatrix {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            counts: vec![vec![1, 0], vec![0, 1]],
            uniform_rows: vec![],
        };
        let p = RegimeDistribution::new(vec![0.3, 0.7]).unwrap();
        let next = propagate(&p, &e).unwrap();
        assert!((next.probs[0] - 0.3).abs() < 1e-15);
        assert!((next.probs[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn propagate_mixes_rows() {
        let p = RegimeDistribution::new(vec![0.5, 0.5]).unwrap();
        let next = propagate(&p, &two_state_chain()).unwrap();
        assert!((next.probs[0] - 0.7).abs() < 1e-12);
        assert!((next.probs[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn propagate_dimension_mismatch() {
        let p = RegimeDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(propagate(&p, &two_state_chain()).is_err());
    }

    #[test]
    fn repeated_propagation_converges() {
        let e = two_state_chain();
        let mut p = RegimeDistribution::new(vec![1.0, 0.0]).unwrap();
        let mut prev_gap = f64::INFINITY;
        for _ in 0..30 {
            let next = propagate(&p, &e).unwrap();
            let gap: f64 =
                next.probs.iter().zip(&p.probs).map(|(a, b)| (a - b).abs()).sum();
            assert!(gap <= prev_gap + 1e-15);
            prev_gap = gap;
            p = next;
        }
        // Stationary distribution of this chain is (5/6, 1/6).
        assert!((p.probs[0] - 5.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn dot_export_counts_edges() {
        let swap = ConditionalTransitionMatrix {
            matrix: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            absorbing_rows: vec![],
        };
        let dot = export_graph(&swap, &["Regime 0".into(), "Regime 1".into()]).unwrap();
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("label=\"1.000\""));

        let silent = ConditionalTransitionMatrix {
            matrix: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            absorbing_rows: vec![0, 1],
        };
        let dot = export_graph(&silent, &["A".into(), "B".into()]).unwrap();
        assert_eq!(dot.matches("->").count(), 0);
        assert!(dot.contains("\"A\";"));
    }

    #[test]
    fn dot_edge_count_matches_nonzeros() {
        let labels = [0usize, 1, 2, 3, 4, 5, 0, 2, 4, 1, 3, 5, 0];
        let e = estimate_transition(&labels, 6).unwrap();
        let c = conditional_transition(&e);
        let nonzeros = c
            .matrix
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i))
            .filter(|(_, &p)| p > 0.0)
            .count();
        let dot = export_graph(&c, &(0..6).map(|i| format!("R{i}")).collect::<Vec<_>>()).unwrap();
        assert_eq!(dot.matches("->").count(), nonzeros);
    }

    #[test]
    fn csv_exports_round_numbers_and_shapes() {
        let m = vec![vec![0.25, 0.75], vec![1.0, 0.0]];
        let names = vec!["a".to_string(), "b".to_string()];
        let wide = matrix_csv(&m, &names).unwrap();
        assert_eq!(wide, "from,a,b\na,0.25,0.75\nb,1,0\n");
        let long = matrix_long_csv(&m, &names).unwrap();
        assert_eq!(long, "from,to,prob\na,a,0.25\na,b,0.75\nb,a,1\nb,b,0\n");
        // Name count must match the matrix.
        assert!(matrix_csv(&m, &names[..1].to_vec()).is_err());
        assert!(matrix_long_csv(&m, &[]).is_err());
    }
}
