//! K-means++ seeding with Lloyd refinement.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::{squared_distance, Matrix, RngState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansConfig {
    pub max_iter: usize,
    /// Stop once the Frobenius norm of the centroid update falls below this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-inertia run is kept.
    pub n_init: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansResult {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub n_iter: usize,
    /// Inertia after every assignment step of the kept run.
    pub inertia_history: Vec<f64>,
}

/// Nearest centroid per row; ties go to the lowest centroid index.
pub fn assign(centroids: &Matrix, data: &Matrix) -> Result<Vec<usize>> {
    if centroids.cols() != data.cols() {
        return Err(shape_err(
            "kmeans assign",
            format!("{} dims", centroids.cols()),
            data.cols(),
        ));
    }
    if centroids.rows() == 0 {
        return Err(Error::Empty("centroids"));
    }
    Ok(data.row_iter().map(|x| nearest(centroids, x).0).collect())
}

fn nearest(centroids: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, squared_distance(x, centroids.row(0)));
    for j in 1..centroids.rows() {
        let d = squared_distance(x, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn kmeans(
    data: &Matrix,
    k: usize,
    config: &KmeansConfig,
    rng: &mut RngState,
) -> Result<KmeansResult> {
    if data.rows() == 0 {
        return Err(Error::Empty("k-means data"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    if k > data.rows() {
        return Err(Error::InvalidArgument(format!(
            "k-means with k={k} on only {} points",
            data.rows()
        )));
    }
    let mut best: Option<KmeansResult> = None;
    for _ in 0..config.n_init.max(1) {
        let seeds = plus_plus_seeds(data, k, rng);
        let run = lloyd(data, seeds, config);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_seeds(data: &Matrix, k: usize, rng: &mut RngState) -> Matrix {
    let n = data.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.below(n));
    let mut min_d: Vec<f64> = data
        .row_iter()
        .map(|x| squared_distance(x, data.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = min_d.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in min_d.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final partial sum
            pick.unwrap_or_else(|| min_d.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            rng.below(n)
        };
        chosen.push(next);
        for (i, x) in data.row_iter().enumerate() {
            let d = squared_distance(x, data.row(next));
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    data.select_rows(&chosen)
}

fn lloyd(data: &Matrix, mut centroids: Matrix, config: &KmeansConfig) -> KmeansResult {
    let k = centroids.rows();
    let dim = data.cols();
    let mut history = Vec::new();
    let mut n_iter = 0;
    loop {
        let assigned: Vec<(usize, f64)> = data.row_iter().map(|x| nearest(&centroids, x)).collect();
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                inertia <= prev * (1.0 + 1e-12) + 1e-12,
                "Lloyd inertia increased"
            );
        }
        history.push(inertia);
        if n_iter >= config.max_iter {
            return finish(centroids, assigned, history, n_iter);
        }
        n_iter += 1;

        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (x, &(j, _)) in data.row_iter().zip(&assigned) {
            counts[j] += 1;
            for (s, v) in sums.row_mut(j).iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut updated = Matrix::zeros(k, dim);
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                for (u, s) in updated.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *u = s / c;
                }
            }
        }
        // empty clusters take the point farthest from its own (updated) centroid
        let mut far: Vec<f64> = data
            .row_iter()
            .zip(&assigned)
            .map(|(x, &(j, _))| squared_distance(x, updated.row(j)))
            .collect();
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let (idx, _) = far
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (i, &d)| if d > b.1 { (i, d) } else { b },
                );
            updated.row_mut(j).copy_from_slice(data.row(idx));
            far[idx] = f64::NEG_INFINITY;
        }

        let shift: f64 = centroids
            .data()
            .iter()
            .zip(updated.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        centroids = updated;
        if shift < config.tol {
            let assigned: Vec<(usize, f64)> =
                data.row_iter().map(|x| nearest(&centroids, x)).collect();
            history.push(assigned.iter().map(|a| a.1).sum());
            return finish(centroids, assigned, history, n_iter);
        }
    }
}

fn finish(
    centroids: Matrix,
    assigned: Vec<(usize, f64)>,
    history: Vec<f64>,
    n_iter: usize,
) -> KmeansResult {
    KmeansResult {
        centroids,
        inertia: assigned.iter().map(|a| a.1).sum(),
        labels: assigned.into_iter().map(|a| a.0).collect(),
        n_iter,
        inertia_history: history,
    }
}
