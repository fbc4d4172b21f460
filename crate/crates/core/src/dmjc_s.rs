//! Implicit fusion: one soft assignment over all views.
//!
//! Each cluster `j` carries per-view importance weights
//! `π_j = softmax(w_j)` and the fused assignment mixes the views' Student-t
//! kernels before normalising:
//!
//! `q_ij = Σ_v π_j^(v) t_ij^(v) / Σ_j' Σ_v' π_j'^(v') t_ij'^(v')`.
//!
//! Training minimises `KL(P ‖ Q)` jointly over encoders, centroids and the
//! unconstrained weights `W`.
//!
//! # Gradients
//!
//! With `s_ij^(v) = π_j^(v) t_ij^(v)`, `a_ij = Σ_v s_ij^(v)` and `P` frozen
//! with unit row sums, the chain rule through `d_ij^(v) = ‖z − μ‖²/α` gives
//!
//! `∂L/∂d_ij^(v) = (α+1)/2 · ρ_ij^(v) (p_ij − q_ij) / (1 + d_ij^(v))`, with
//! `ρ_ij^(v) = s_ij^(v) / a_ij`,
//!
//! so `∂L/∂z_i^(v) = (2/α) Σ_j ∂L/∂d_ij^(v) (z_i^(v) − μ_j^(v))`, the
//! centroid gradient is its negated sum over samples, and
//! `∂L/∂π_j^(v) = Σ_i (t_ij^(v) / a_ij)(q_ij − p_ij)` feeds the softmax
//! Jacobian `∂L/∂w_j^(v) = π_j^(v) (g_j^(v) − Σ_v' π_j^(v') g_j^(v'))`.
//! All ratios are formed in the log domain.

use crate::assignment::{kl_loss, kl_pull_grads, student_t_kernel, target_distribution, Kernel};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{log_sum_exp, softmax_rows, Matrix, OptimizerState, RngState};
use crate::train::{
    accuracy_or_none, as_divergence, check_truth, common_rows, ensure_finite_loss, label_change,
    EpochRecord, EpochSnapshot, TrainConfig, TrainHistory, ViewBranch,
};

/// Row-wise softmax of the `K × V` unconstrained weights.
pub fn importance_softmax(weights: &Matrix) -> Matrix {
    softmax_rows(weights)
}

struct FusedTerms {
    kernels: Vec<Kernel>,
    q: Matrix,
    /// `s_ij^(v) / a_ij` per view
    rho: Vec<Matrix>,
    /// `t_ij^(v) / a_ij` per view
    t_over_a: Vec<Matrix>,
}

fn check_views(z: &[Matrix], centroids: &[&Matrix], pi: &Matrix) -> Result<(usize, usize)> {
    let v = z.len();
    if v == 0 {
        return Err(Error::Empty("views"));
    }
    if centroids.len() != v || pi.cols() != v {
        return Err(shape_err(
            "multiview_soft_assignment",
            format!("{v} views"),
            format!(
                "{} centroid sets, {} weight columns",
                centroids.len(),
                pi.cols()
            ),
        ));
    }
    let k = pi.rows();
    if let Some(bad) = centroids.iter().find(|c| c.rows() != k) {
        return Err(shape_err(
            "multiview_soft_assignment",
            format!("{k} clusters"),
            bad.rows(),
        ));
    }
    let n = z[0].rows();
    if z.iter().any(|m| m.rows() != n) {
        return Err(Error::InvalidArgument(
            "views disagree on the sample count".into(),
        ));
    }
    Ok((n, k))
}

fn fused_terms(z: &[Matrix], centroids: &[&Matrix], pi: &Matrix, alpha: f64) -> Result<FusedTerms> {
    let (n, k) = check_views(z, centroids, pi)?;
    let v = z.len();
    let kernels = z
        .iter()
        .zip(centroids)
        .map(|(zv, mu)| student_t_kernel(zv, mu, alpha))
        .collect::<Result<Vec<_>>>()?;
    let log_pi = pi.map(f64::ln);
    let log_s: Vec<Matrix> = kernels
        .iter()
        .enumerate()
        .map(|(view, kern)| Matrix::from_fn(n, k, |i, j| log_pi[(j, view)] + kern.log_t[(i, j)]))
        .collect();
    let log_a = Matrix::from_fn(n, k, |i, j| {
        log_sum_exp((0..v).map(|view| log_s[view][(i, j)]))
    });
    let q = softmax_rows(&log_a);
    let rho = log_s
        .iter()
        .map(|ls| Matrix::from_fn(n, k, |i, j| (ls[(i, j)] - log_a[(i, j)]).exp()))
        .collect();
    let t_over_a = kernels
        .iter()
        .map(|kern| Matrix::from_fn(n, k, |i, j| (kern.log_t[(i, j)] - log_a[(i, j)]).exp()))
        .collect();
    Ok(FusedTerms {
        kernels,
        q,
        rho,
        t_over_a,
    })
}

/// Fused soft assignment `Q` for the given per-view embeddings and centroids.
pub fn multiview_soft_assignment(
    z: &[Matrix],
    centroids: &[&Matrix],
    pi: &Matrix,
    alpha: f64,
) -> Result<Matrix> {
    Ok(fused_terms(z, centroids, pi, alpha)?.q)
}

/// `KL(P ‖ Q)` summed over samples, `Q` from the fused assignment.
pub fn dmjc_s_objective(
    z: &[Matrix],
    centroids: &[&Matrix],
    weights: &Matrix,
    p: &Matrix,
    alpha: f64,
) -> Result<f64> {
    let q = multiview_soft_assignment(z, centroids, &importance_softmax(weights), alpha)?;
    kl_loss(p, &q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmjcSGrads {
    pub grad_z: Vec<Matrix>,
    pub grad_mu: Vec<Matrix>,
    pub grad_w: Matrix,
}

/// Analytic gradients of [`dmjc_s_objective`] with `p` frozen.
pub fn dmjc_s_gradients(
    z: &[Matrix],
    centroids: &[&Matrix],
    weights: &Matrix,
    p: &Matrix,
    alpha: f64,
) -> Result<DmjcSGrads> {
    let pi = importance_softmax(weights);
    let terms = fused_terms(z, centroids, &pi, alpha)?;
    gradients_from_terms(z, centroids, &pi, p, &terms, alpha)
}

fn gradients_from_terms(
    z: &[Matrix],
    centroids: &[&Matrix],
    pi: &Matrix,
    p: &Matrix,
    terms: &FusedTerms,
    alpha: f64,
) -> Result<DmjcSGrads> {
    if !p.same_shape(&terms.q) {
        return Err(shape_err(
            "dmjc_s_gradients",
            format!("target {:?}", terms.q.shape()),
            format!("{:?}", p.shape()),
        ));
    }
    let (n, k) = terms.q.shape();
    let v = z.len();
    let mut grad_z = Vec::with_capacity(v);
    let mut grad_mu = Vec::with_capacity(v);
    for view in 0..v {
        let (gz, gm) = kl_pull_grads(
            &z[view],
            centroids[view],
            p,
            &terms.q,
            &terms.kernels[view].one_plus_d,
            Some(&terms.rho[view]),
            alpha,
        );
        grad_z.push(gz);
        grad_mu.push(gm);
    }
    let mut grad_pi = Matrix::zeros(k, v);
    for (view, ta) in terms.t_over_a.iter().enumerate() {
        for i in 0..n {
            for j in 0..k {
                grad_pi[(j, view)] += ta[(i, j)] * (terms.q[(i, j)] - p[(i, j)]);
            }
        }
    }
    let mut grad_w = Matrix::zeros(k, v);
    for j in 0..k {
        let mean: f64 = (0..v).map(|u| pi[(j, u)] * grad_pi[(j, u)]).sum();
        for u in 0..v {
            grad_w[(j, u)] = pi[(j, u)] * (grad_pi[(j, u)] - mean);
        }
    }
    for (what, m) in grad_z
        .iter()
        .chain(&grad_mu)
        .map(|m| ("embedding/centroid", m))
        .chain([("weights", &grad_w)])
    {
        m.ensure_finite(&format!("{what} gradient"))?;
    }
    Ok(DmjcSGrads {
        grad_z,
        grad_mu,
        grad_w,
    })
}

/// Encoders, centroids and `K × V` unconstrained importance weights.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DmjcSState {
    pub branches: Vec<ViewBranch>,
    pub weights: Matrix,
}

impl DmjcSState {
    /// Zero weights, i.e. `π_j^(v) = 1/V`.
    pub fn new(branches: Vec<ViewBranch>) -> Result<Self> {
        let k = branches.first().ok_or(Error::Empty("views"))?.clusters();
        if branches.iter().any(|b| b.clusters() != k) {
            return Err(Error::InvalidArgument(
                "views disagree on the cluster count".into(),
            ));
        }
        let weights = Matrix::zeros(k, branches.len());
        Ok(Self { branches, weights })
    }

    pub fn importance(&self) -> Matrix {
        importance_softmax(&self.weights)
    }

    fn centroid_refs(&self) -> Vec<&Matrix> {
        self.branches.iter().map(|b| &b.centroids).collect()
    }

    fn embed(&self, views: &[Matrix]) -> Result<Vec<Matrix>> {
        if views.len() != self.branches.len() {
            return Err(shape_err(
                "dmjc_s",
                format!("{} views", self.branches.len()),
                views.len(),
            ));
        }
        self.branches
            .iter()
            .zip(views)
            .map(|(b, x)| b.encoder.forward(x))
            .collect()
    }

    /// Fused soft assignment over full data.
    pub fn soft_assignment(&self, views: &[Matrix], alpha: f64) -> Result<Matrix> {
        let z = self.embed(views)?;
        multiview_soft_assignment(&z, &self.centroid_refs(), &self.importance(), alpha)
    }
}

/// `argmax_j q_ij` of the fused assignment; ties go to the lowest index.
pub fn predict_s(state: &DmjcSState, views: &[Matrix], alpha: f64) -> Result<Vec<usize>> {
    Ok(state.soft_assignment(views, alpha)?.argmax_rows())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmjcSOutcome {
    pub state: DmjcSState,
    pub history: TrainHistory,
    pub labels: Vec<usize>,
}

/// Joint training of all views' encoders, centroids and the importance
/// weights. Epoch structure and stopping match [`crate::assignment::dec_train`];
/// each view and `W` get their own optimizer state of the configured kind.
pub fn dmjc_s_train(
    mut state: DmjcSState,
    views: &[Matrix],
    config: &TrainConfig,
    rng: &mut RngState,
    truth: Option<&[usize]>,
    mut observer: impl FnMut(&EpochSnapshot<'_>),
) -> Result<DmjcSOutcome> {
    config.validate()?;
    let hyper = &config.hyper;
    let n = common_rows(views)?;
    check_truth(truth, n)?;
    let mut view_opts: Vec<OptimizerState> = state
        .branches
        .iter()
        .map(|_| OptimizerState::new(config.optimizer))
        .collect();
    let mut weight_opt = OptimizerState::new(config.optimizer);
    let mut history = TrainHistory::default();
    let mut target: Option<Matrix> = None;
    let mut target_labels: Option<Vec<usize>> = None;

    for epoch in 0..hyper.max_epochs {
        let diverged = as_divergence(epoch);
        let z = state.embed(views).map_err(&diverged)?;
        let pi = state.importance();
        let terms = fused_terms(&z, &state.centroid_refs(), &pi, hyper.alpha)?;
        let labels = terms.q.argmax_rows();
        let mut change = None;
        if target.is_none() || epoch % hyper.update_interval == 0 {
            target = Some(target_distribution(&terms.q, hyper.gamma)?);
            if let Some(prev) = &target_labels {
                change = Some(label_change(prev, &labels));
            }
            target_labels = Some(labels.clone());
        }
        let p = target.as_ref().expect("set above");
        let loss = kl_loss(p, &terms.q)?;
        ensure_finite_loss(loss, epoch)?;

        let mut soft = Vec::with_capacity(z.len() + 1);
        soft.push(terms.q.clone());
        soft.extend(terms.kernels.iter().map(|k| softmax_rows(&k.log_t)));
        let acc_views = match truth {
            Some(_) => soft[1..]
                .iter()
                .filter_map(|q| accuracy_or_none(truth, &q.argmax_rows()))
                .collect(),
            None => Vec::new(),
        };
        history.records.push(EpochRecord {
            epoch,
            loss,
            weights: (0..pi.cols())
                .map(|v| (0..pi.rows()).map(|j| pi[(j, v)]).sum())
                .collect(),
            acc_views,
            acc_fused: accuracy_or_none(truth, &labels),
            label_change: change,
        });
        observer(&EpochSnapshot {
            epoch,
            soft: &soft,
            targets: std::slice::from_ref(p),
            simplex_rows: &pi,
        });
        if change.is_some_and(|c| c < hyper.label_change_tol) {
            history.converged = true;
            break;
        }

        for chunk in rng.permutation(n).chunks(config.batch_size) {
            let caches = state
                .branches
                .iter()
                .zip(views)
                .map(|(b, x)| b.encoder.forward_cached(&x.select_rows(chunk)))
                .collect::<Result<Vec<_>>>()
                .map_err(&diverged)?;
            let z_batch: Vec<Matrix> = caches.iter().map(|c| c.output().clone()).collect();
            let p_batch = p.select_rows(chunk);
            let mut grads = dmjc_s_gradients(
                &z_batch,
                &state.centroid_refs(),
                &state.weights,
                &p_batch,
                hyper.alpha,
            )
            .map_err(&diverged)?;
            let inv = 1.0 / chunk.len() as f64;
            for ((branch, opt), (cache, (gz, gm))) in
                state.branches.iter_mut().zip(&mut view_opts).zip(
                    caches
                        .iter()
                        .zip(grads.grad_z.iter_mut().zip(grads.grad_mu.iter_mut())),
                )
            {
                gz.scale(inv);
                gm.scale(inv);
                branch.apply_step(opt, cache, gz, gm).map_err(&diverged)?;
            }
            grads.grad_w.scale(inv);
            weight_opt
                .step(&mut [&mut state.weights], &[&grads.grad_w])
                .map_err(&diverged)?;
        }
    }

    let labels = predict_s(&state, views, hyper.alpha)?;
    Ok(DmjcSOutcome {
        state,
        history,
        labels,
    })
}
