//! Single-view self-training machinery.
//!
//! A Student-t kernel turns embedding-to-centroid distances into a soft
//! assignment `q`, a sharpened target `p ∝ q^γ` serves as the self-training
//! label, and training minimises `KL(P ‖ Q)` with `P` held fixed between
//! target updates. The same kernel and gradient code backs both multi-view
//! variants.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::kmeans::{kmeans, KmeansConfig};
use crate::numerics::{softmax_rows, squared_distance, Matrix, OptimizerState, RngState};
use crate::train::{
    accuracy_or_none, as_divergence, check_truth, ensure_finite_loss, label_change, EpochRecord,
    EpochSnapshot, TrainConfig, TrainHistory, ViewBranch,
};

/// Lower bound applied to `q` before logarithms and divisions.
pub const Q_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecHyper {
    /// Student-t degrees of freedom.
    pub alpha: f64,
    /// Target sharpening exponent.
    pub gamma: f64,
    /// Epochs between target recomputations.
    pub update_interval: usize,
    pub max_epochs: usize,
    /// Stop when fewer than this fraction of hard labels change between target updates.
    pub label_change_tol: f64,
}

impl Default for DecHyper {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 2.0,
            update_interval: 1,
            max_epochs: 100,
            label_change_tol: 0.001,
        }
    }
}

impl DecHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be > 1, got {}",
                self.gamma
            )));
        }
        if self.update_interval == 0 {
            return Err(Error::InvalidArgument(
                "update_interval must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.label_change_tol) {
            return Err(Error::InvalidArgument(
                "label_change_tol must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Soft assignment and target for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentPair {
    pub q: Matrix,
    pub p: Matrix,
}

/// Student-t kernel terms for every (sample, centroid) pair.
#[derive(Clone, Debug)]
pub(crate) struct Kernel {
    /// `ln t_ij = -(α+1)/2 · ln(1 + ‖z_i − μ_j‖²/α)`
    pub log_t: Matrix,
    /// `1 + ‖z_i − μ_j‖²/α`
    pub one_plus_d: Matrix,
}

pub(crate) fn student_t_kernel(z: &Matrix, centroids: &Matrix, alpha: f64) -> Result<Kernel> {
    if centroids.rows() == 0 {
        return Err(Error::InvalidArgument(
            "soft assignment needs K >= 1 centroids".into(),
        ));
    }
    if z.cols() != centroids.cols() {
        return Err(shape_err(
            "soft_assignment",
            format!("{} embedding dims", centroids.cols()),
            z.cols(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be > 0, got {alpha}"
        )));
    }
    let (n, k) = (z.rows(), centroids.rows());
    let exponent = -(alpha + 1.0) / 2.0;
    let mut one_plus_d = Matrix::zeros(n, k);
    let mut log_t = Matrix::zeros(n, k);
    for i in 0..n {
        let zi = z.row(i);
        for j in 0..k {
            let opd = 1.0 + squared_distance(zi, centroids.row(j)) / alpha;
            one_plus_d[(i, j)] = opd;
            log_t[(i, j)] = exponent * opd.ln();
        }
    }
    Ok(Kernel { log_t, one_plus_d })
}

/// `q_ij ∝ (1 + ‖z_i − μ_j‖²/α)^{-(α+1)/2}`, normalised over clusters.
pub fn soft_assignment(z: &Matrix, centroids: &Matrix, alpha: f64) -> Result<Matrix> {
    let kernel = student_t_kernel(z, centroids, alpha)?;
    Ok(softmax_rows(&kernel.log_t))
}

/// `p_ij = q_ij^γ / Σ_j' q_ij'^γ`.
pub fn target_distribution(q: &Matrix, gamma: f64) -> Result<Matrix> {
    if !(gamma > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be > 1, got {gamma}"
        )));
    }
    let mut p = Matrix::zeros(q.rows(), q.cols());
    for i in 0..q.rows() {
        let row = q.row(i);
        if row.iter().all(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "row {i} of the soft assignment is all zero"
            )));
        }
        let out = p.row_mut(i);
        for (o, &v) in out.iter_mut().zip(row) {
            *o = gamma * v.ln();
        }
        crate::numerics::softmax_inplace(out);
    }
    Ok(p)
}

/// `Σ_i Σ_j p_ij ln(p_ij / q_ij)` with `0 · ln 0 = 0` and `q` floored at [`Q_FLOOR`].
pub fn kl_loss(p: &Matrix, q: &Matrix) -> Result<f64> {
    if !p.same_shape(q) {
        return Err(shape_err(
            "kl_loss",
            format!("{:?}", q.shape()),
            format!("{:?}", p.shape()),
        ));
    }
    Ok(p.data()
        .iter()
        .zip(q.data())
        .map(|(&pv, &qv)| {
            if pv > 0.0 {
                pv * (pv.ln() - qv.max(Q_FLOOR).ln())
            } else {
                0.0
            }
        })
        .sum())
}

/// Gradients of `Σ_i KL(p_i ‖ q_i)` w.r.t. embeddings and centroids:
///
/// `∂L/∂z_i = (α+1)/α · Σ_j ρ_ij (p_ij − q_ij)(z_i − μ_j) / (1 + d_ij)`
/// and `∂L/∂μ_j` the negated sum over samples. `rho` carries the per-view
/// share of the fused kernel mass for the implicit-fusion model and is 1
/// (absent) otherwise.
pub(crate) fn kl_pull_grads(
    z: &Matrix,
    centroids: &Matrix,
    p: &Matrix,
    q: &Matrix,
    one_plus_d: &Matrix,
    rho: Option<&Matrix>,
    alpha: f64,
) -> (Matrix, Matrix) {
    let (n, k, dim) = (z.rows(), centroids.rows(), z.cols());
    let scale = (alpha + 1.0) / alpha;
    let mut grad_z = Matrix::zeros(n, dim);
    let mut grad_mu = Matrix::zeros(k, dim);
    for i in 0..n {
        for j in 0..k {
            let diff = p[(i, j)] - q[(i, j)];
            let weighted = match rho {
                Some(r) => r[(i, j)] * diff,
                None => diff,
            };
            let coef = scale * weighted / one_plus_d[(i, j)];
            if coef == 0.0 {
                continue;
            }
            let zi = z.row(i);
            let mu = centroids.row(j);
            for c in 0..dim {
                let pull = coef * (zi[c] - mu[c]);
                grad_z[(i, c)] += pull;
                grad_mu[(j, c)] -= pull;
            }
        }
    }
    (grad_z, grad_mu)
}

/// Analytic `(∂L/∂z, ∂L/∂μ)` of the summed KL objective with `p` frozen.
pub fn dec_gradients(
    z: &Matrix,
    centroids: &Matrix,
    p: &Matrix,
    alpha: f64,
) -> Result<(Matrix, Matrix)> {
    let kernel = student_t_kernel(z, centroids, alpha)?;
    let q = softmax_rows(&kernel.log_t);
    if !p.same_shape(&q) {
        return Err(shape_err(
            "dec_gradients",
            format!("target {:?}", q.shape()),
            format!("{:?}", p.shape()),
        ));
    }
    Ok(kl_pull_grads(
        z,
        centroids,
        p,
        &q,
        &kernel.one_plus_d,
        None,
        alpha,
    ))
}

/// Result of the concatenated k-means initialisation.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewInit {
    /// Per-view `K × D_v` centroids.
    pub centroids: Vec<Matrix>,
    pub labels: Vec<usize>,
}

/// Runs k-means on the column-concatenated embeddings and sets each view's
/// centroid `j` to the mean of that view's embeddings labelled `j`.
pub fn init_view_centroids(
    embeddings: &[Matrix],
    k: usize,
    config: &KmeansConfig,
    rng: &mut RngState,
) -> Result<ViewInit> {
    let n = crate::train::common_rows(embeddings)?;
    let refs: Vec<&Matrix> = embeddings.iter().collect();
    let joined = Matrix::hcat(&refs)?;
    let result = kmeans(&joined, k, config, rng)?;
    let mut counts = vec![0usize; k];
    for &l in &result.labels {
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "cluster {empty} is empty after k-means initialisation"
        )));
    }
    let centroids = embeddings
        .iter()
        .map(|z| {
            let mut sums = Matrix::zeros(k, z.cols());
            for i in 0..n {
                let j = result.labels[i];
                for (s, v) in sums.row_mut(j).iter_mut().zip(z.row(i)) {
                    *s += v;
                }
            }
            for (j, &count) in counts.iter().enumerate() {
                sums.row_mut(j).iter_mut().for_each(|s| *s /= count as f64);
            }
            sums
        })
        .collect();
    Ok(ViewInit {
        centroids,
        labels: result.labels,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecOutcome {
    pub branch: ViewBranch,
    pub history: TrainHistory,
    /// `argmax_j q_ij` at the final parameters.
    pub labels: Vec<usize>,
}

/// Single-view joint training of encoder and centroids.
///
/// Each epoch recomputes `Q` on the full data, refreshes `P` every
/// `update_interval` epochs, records history, checks the label-change stop
/// rule, then sweeps shuffled minibatches. Minibatch gradients are averaged
/// over the batch.
pub fn dec_train(
    mut branch: ViewBranch,
    data: &Matrix,
    config: &TrainConfig,
    rng: &mut RngState,
    truth: Option<&[usize]>,
    mut observer: impl FnMut(&EpochSnapshot<'_>),
) -> Result<DecOutcome> {
    config.validate()?;
    let hyper = &config.hyper;
    let n = data.rows();
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    check_truth(truth, n)?;
    let mut optimizer = OptimizerState::new(config.optimizer);
    let mut history = TrainHistory::default();
    let mut target: Option<Matrix> = None;
    let mut target_labels: Option<Vec<usize>> = None;
    let unit = Matrix::filled(1, 1, 1.0);

    for epoch in 0..hyper.max_epochs {
        let diverged = as_divergence(epoch);
        let z = branch.encoder.forward(data).map_err(&diverged)?;
        let q = soft_assignment(&z, &branch.centroids, hyper.alpha)?;
        let labels = q.argmax_rows();
        let mut change = None;
        if target.is_none() || epoch % hyper.update_interval == 0 {
            target = Some(target_distribution(&q, hyper.gamma)?);
            if let Some(prev) = &target_labels {
                change = Some(label_change(prev, &labels));
            }
            target_labels = Some(labels.clone());
        }
        let p = target.as_ref().expect("set above");
        let loss = kl_loss(p, &q)?;
        ensure_finite_loss(loss, epoch)?;

        let acc = accuracy_or_none(truth, &labels);
        history.records.push(EpochRecord {
            epoch,
            loss,
            weights: vec![1.0],
            acc_views: acc.into_iter().collect(),
            acc_fused: acc,
            label_change: change,
        });
        observer(&EpochSnapshot {
            epoch,
            soft: std::slice::from_ref(&q),
            targets: std::slice::from_ref(p),
            simplex_rows: &unit,
        });
        if change.is_some_and(|c| c < hyper.label_change_tol) {
            history.converged = true;
            break;
        }

        for chunk in rng.permutation(n).chunks(config.batch_size) {
            let batch = data.select_rows(chunk);
            let cache = branch.encoder.forward_cached(&batch).map_err(&diverged)?;
            let p_batch = p.select_rows(chunk);
            let (mut grad_z, mut grad_mu) =
                dec_gradients(cache.output(), &branch.centroids, &p_batch, hyper.alpha)?;
            let inv = 1.0 / chunk.len() as f64;
            grad_z.scale(inv);
            grad_mu.scale(inv);
            branch
                .apply_step(&mut optimizer, &cache, &grad_z, &grad_mu)
                .map_err(&diverged)?;
        }
    }

    let z = branch.encoder.forward(data)?;
    let labels = soft_assignment(&z, &branch.centroids, hyper.alpha)?.argmax_rows();
    Ok(DecOutcome {
        branch,
        history,
        labels,
    })
}
