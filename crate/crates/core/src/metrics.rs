//! Clustering evaluation: accuracy under the best one-to-one label matching,
//! normalized mutual information, and the adjusted Rand index.
//!
//! NMI is normalised by the geometric mean of the two entropies
//! (`I / sqrt(H_pred · H_truth)`, natural logs) and is defined as 0 when
//! either labelling has zero entropy.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{shape_err, Error, Result};

/// Dense contingency table between two labellings.
struct Contingency {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<usize, usize> = labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<Contingency> {
    if pred.len() != truth.len() {
        return Err(shape_err(
            "metrics",
            format!("{} labels", truth.len()),
            pred.len(),
        ));
    }
    let (p, np) = dense_ids(pred);
    let (t, nt) = dense_ids(truth);
    let mut counts = vec![vec![0u64; nt]; np];
    for (&a, &b) in p.iter().zip(&t) {
        counts[a][b] += 1;
    }
    let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums = (0..nt).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency {
        counts,
        row_sums,
        col_sums,
        n: pred.len() as u64,
    })
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials, O(n³)). Returns `assignment[row] = col`.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(
        cost.iter().all(|r| r.len() == n),
        "cost matrix must be square"
    );
    const INF: i64 = i64::MAX / 4;
    // 1-based internals; index 0 is the virtual source column
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_v = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = INF;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if reduced < min_v[col] {
                    min_v[col] = reduced;
                    way[col] = col0;
                }
                if min_v[col] < delta {
                    delta = min_v[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_v[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    assignment
}

/// Fraction of samples on which `pred` agrees with `truth` under the best
/// one-to-one matching of cluster ids to class ids.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if table.n == 0 {
        return Err(Error::Empty("labels"));
    }
    let size = table.row_sums.len().max(table.col_sums.len());
    let mut cost = vec![vec![0i64; size]; size];
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost[i][j] = -(c as i64);
        }
    }
    let matched: i64 = hungarian(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| -cost[i][j])
        .sum();
    Ok(matched as f64 / table.n as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if table.n == 0 {
        return Err(Error::Empty("labels"));
    }
    let n = table.n as f64;
    let h_pred = entropy(&table.row_sums, n);
    let h_truth = entropy(&table.col_sums, n);
    let denom = (h_pred * h_truth).sqrt();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                let ratio = n * c / (table.row_sums[i] as f64 * table.col_sums[j] as f64);
                mi += c / n * ratio.ln();
            }
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index under the permutation model. Degenerate inputs with
/// a zero-width normaliser (both labellings trivial) score 1.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if table.n == 0 {
        return Err(Error::Empty("labels"));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = table.row_sums.iter().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = table.col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(table.n);
    let expected = if total > 0.0 {
        sum_rows * sum_cols / total
    } else {
        0.0
    };
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusteringScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<ClusteringScores> {
    Ok(ClusteringScores {
        acc: clustering_accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_relabelled() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let relabel = [5, 5, 0, 0, 9, 9, 9];
        for pred in [&truth[..], &relabel[..]] {
            assert_eq!(clustering_accuracy(pred, &truth).unwrap(), 1.0);
            assert!((nmi(pred, &truth).unwrap() - 1.0).abs() < 1e-12);
            assert!((ari(pred, &truth).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_case() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 0, 1];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 0.5);
        assert!(nmi(&pred, &truth).unwrap().abs() < 1e-12);
        assert!((ari(&pred, &truth).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_prediction_has_zero_nmi() {
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn unequal_cluster_and_class_counts() {
        // three clusters against two classes: best matching covers 4 of 5
        let pred = [0, 0, 1, 2, 2];
        let truth = [0, 0, 0, 1, 1];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 0.8);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(clustering_accuracy(&[0, 1], &[0]).is_err());
        assert!(nmi(&[0, 1], &[0]).is_err());
        assert!(ari(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = hungarian(&cost);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5);
    }
}
