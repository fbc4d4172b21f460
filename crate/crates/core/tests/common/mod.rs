#![allow(dead_code)]

use dmjc::numerics::{softmax_rows, Matrix, RngState};

/// Step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// `|a − f| / max(|a|, |f|, 1e-5)`; the floor keeps coordinates that are
/// zero up to rounding from dominating.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Largest relative error between `analytic` and central differences of `f`
/// at `x`, over every coordinate.
pub fn fd_max_rel_err(x: &Matrix, analytic: &Matrix, f: impl Fn(&Matrix) -> f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst = 0.0f64;
    for idx in 0..x.data().len() {
        let mut plus = x.clone();
        plus.data_mut()[idx] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[idx] -= FD_STEP;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic.data()[idx], numeric));
    }
    worst
}

pub fn normal_matrix(rng: &mut RngState, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.normal())
}

/// Random row-stochastic matrix with strictly positive entries.
pub fn random_stochastic(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
    softmax_rows(&normal_matrix(rng, rows, cols, 1.5))
}

pub fn row_sums_within(m: &Matrix, tol: f64) -> bool {
    m.row_iter()
        .all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= tol)
}

/// Two well-separated 2-D Gaussian blobs, `per` points each.
pub fn two_blobs(rng: &mut RngState, per: usize) -> (Matrix, Vec<usize>) {
    let labels: Vec<usize> = (0..2 * per).map(|i| i / per).collect();
    let data = Matrix::from_fn(2 * per, 2, |i, c| {
        let centre = if c == 0 {
            if labels[i] == 0 {
                -5.0
            } else {
                5.0
            }
        } else {
            0.0
        };
        centre + rng.normal()
    });
    (data, labels)
}
