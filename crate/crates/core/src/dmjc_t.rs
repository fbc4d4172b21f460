//! Explicit fusion: per-view assignments with one fused target.
//!
//! Every view keeps its own Student-t assignment `Q^(v)` and sharpened
//! target `P^(v)`. The shared target is the convex combination
//! `p_ij = Σ_v w_v p_ij^(v)` with `w` on the open simplex, and the objective
//!
//! `L = Σ_v' Σ_i Σ_j p_ij ln(p_ij / q_ij^(v')) + λ ‖w‖²`
//!
//! is minimised alternately: minibatch steps on encoders and centroids with
//! `P` and `w` frozen, then an accelerated proximal gradient solve for `w`
//! with every `P^(v)`, `Q^(v)` frozen.

use serde::{Deserialize, Serialize};

use crate::assignment::{dec_gradients, kl_loss, soft_assignment, target_distribution, Q_FLOOR};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{Matrix, OptimizerState, RngState};
use crate::train::{
    accuracy_or_none, as_divergence, check_truth, common_rows, ensure_finite_loss, label_change,
    EpochRecord, EpochSnapshot, TrainConfig, TrainHistory, ViewBranch,
};

/// Smallest weight any view may carry.
pub const WEIGHT_FLOOR: f64 = 1e-8;
pub const DEFAULT_LAMBDA: f64 = 2e4;

/// View weights on the open simplex plus the ℓ2 strength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewWeights {
    weights: Vec<f64>,
    lambda: f64,
}

impl ViewWeights {
    pub fn uniform(views: usize, lambda: f64) -> Result<Self> {
        if views == 0 {
            return Err(Error::Empty("views"));
        }
        Self::new(vec![1.0 / views as f64; views], lambda)
    }

    pub fn new(weights: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if weights.is_empty() {
            return Err(Error::Empty("view weights"));
        }
        if weights
            .iter()
            .any(|&w| !(w >= WEIGHT_FLOOR * 0.5) || !w.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "view weights must be positive: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "view weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights, lambda })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_weights(len: usize, w: &[f64], op: &'static str) -> Result<()> {
    if len == 0 {
        return Err(Error::Empty("views"));
    }
    if w.len() != len {
        return Err(shape_err(op, format!("{len} weights"), w.len()));
    }
    Ok(())
}

/// `p_ij = Σ_v w_v p_ij^(v)`.
pub fn fused_target(p_views: &[Matrix], w: &[f64]) -> Result<Matrix> {
    check_weights(p_views.len(), w, "fused_target")?;
    let first = &p_views[0];
    if let Some(bad) = p_views.iter().find(|p| !p.same_shape(first)) {
        return Err(shape_err(
            "fused_target",
            format!("{:?}", first.shape()),
            format!("{:?}", bad.shape()),
        ));
    }
    let mut out = Matrix::zeros(first.rows(), first.cols());
    for (p, &wv) in p_views.iter().zip(w) {
        out.add_scaled(p, wv)?;
    }
    Ok(out)
}

/// `Σ_v' KL(P ‖ Q^(v')) + λ‖w‖²` with `P` the fused target.
pub fn objective_t(p_views: &[Matrix], q_views: &[Matrix], w: &[f64], lambda: f64) -> Result<f64> {
    if q_views.len() != p_views.len() {
        return Err(shape_err(
            "objective_t",
            format!("{} views", p_views.len()),
            q_views.len(),
        ));
    }
    let p = fused_target(p_views, w)?;
    let mut total = 0.0;
    for q in q_views {
        total += kl_loss(&p, q)?;
    }
    Ok(total + lambda * w.iter().map(|x| x * x).sum::<f64>())
}

/// Encoder and centroid gradients for one view: the single-view KL
/// gradients against the fused target.
pub fn dmjc_t_network_gradients(
    z: &Matrix,
    centroids: &Matrix,
    fused: &Matrix,
    alpha: f64,
) -> Result<(Matrix, Matrix)> {
    dec_gradients(z, centroids, fused, alpha)
}

/// Euclidean projection onto the probability simplex, then floored at
/// [`WEIGHT_FLOOR`] and renormalised.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(WEIGHT_FLOOR)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApgConfig {
    pub max_iter: usize,
    /// Initial step size; the Lipschitz estimate starts at its inverse.
    pub step_init: f64,
    /// Step shrink factor per failed sufficient-decrease test.
    pub backtrack_factor: f64,
    pub rel_tol: f64,
}

impl Default for ApgConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step_init: 1.0,
            backtrack_factor: 0.5,
            rel_tol: 1e-8,
        }
    }
}

impl ApgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "apg max_iter must be positive".into(),
            ));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(Error::InvalidArgument(
                "apg step_init must be positive".into(),
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidArgument(
                "apg backtrack_factor must lie in (0, 1)".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "apg rel_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApgOutcome {
    pub weights: ViewWeights,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before the tolerance was met.
    pub converged: bool,
    /// Objective at the start and after every iteration (monotone).
    pub objective_trace: Vec<f64>,
}

/// The weight subproblem with all `P^(v)` and `Q^(v)` frozen.
///
/// `f(w) = Σ_ij [V p_ij ln p_ij − p_ij Σ_v' ln q_ij^(v')] + λ‖w‖²` where
/// `p = Σ_v w_v P^(v)`.
struct WeightProblem<'a> {
    p_views: &'a [Matrix],
    /// `Σ_v' ln max(q^(v'), floor)`, flattened.
    log_q_sum: Vec<f64>,
    views: f64,
    lambda: f64,
}

impl<'a> WeightProblem<'a> {
    fn new(p_views: &'a [Matrix], q_views: &[Matrix], lambda: f64) -> Result<Self> {
        let v = p_views.len();
        if v == 0 {
            return Err(Error::Empty("views"));
        }
        if q_views.len() != v {
            return Err(shape_err(
                "solve_w_apg",
                format!("{v} views"),
                q_views.len(),
            ));
        }
        let shape = p_views[0].shape();
        if let Some(bad) = p_views.iter().chain(q_views).find(|m| m.shape() != shape) {
            return Err(shape_err(
                "solve_w_apg",
                format!("{shape:?}"),
                format!("{:?}", bad.shape()),
            ));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let mut log_q_sum = vec![0.0; shape.0 * shape.1];
        for q in q_views {
            for (acc, &x) in log_q_sum.iter_mut().zip(q.data()) {
                *acc += x.max(Q_FLOOR).ln();
            }
        }
        Ok(Self {
            p_views,
            log_q_sum,
            views: v as f64,
            lambda,
        })
    }

    fn fused(&self, w: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.log_q_sum.len()];
        for (pv, &wv) in self.p_views.iter().zip(w) {
            for (acc, &x) in p.iter_mut().zip(pv.data()) {
                *acc += wv * x;
            }
        }
        p
    }

    fn value(&self, w: &[f64]) -> f64 {
        let p = self.fused(w);
        let kl: f64 = p
            .iter()
            .zip(&self.log_q_sum)
            .map(|(&pv, &lq)| {
                if pv > 0.0 {
                    self.views * pv * pv.ln() - pv * lq
                } else {
                    0.0
                }
            })
            .sum();
        kl + self.lambda * w.iter().map(|x| x * x).sum::<f64>()
    }

    fn value_and_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let p = self.fused(w);
        // ∂f/∂p_ij, zero where p vanishes
        let dp: Vec<f64> = p
            .iter()
            .zip(&self.log_q_sum)
            .map(|(&pv, &lq)| {
                if pv > 0.0 {
                    self.views * (pv.ln() + 1.0) - lq
                } else {
                    0.0
                }
            })
            .collect();
        let grad = self
            .p_views
            .iter()
            .zip(w)
            .map(|(pv, &wv)| {
                pv.data().iter().zip(&dp).map(|(x, d)| x * d).sum::<f64>() + 2.0 * self.lambda * wv
            })
            .collect();
        (self.value(w), grad)
    }

    /// Projected gradient step from `y` with backtracking on the local
    /// Lipschitz estimate.
    fn gradient_step(&self, y: &[f64], lipschitz: &mut f64, backtrack: f64) -> (Vec<f64>, f64) {
        let (fy, gy) = self.value_and_grad(y);
        loop {
            let trial: Vec<f64> = y
                .iter()
                .zip(&gy)
                .map(|(yv, g)| yv - g / *lipschitz)
                .collect();
            let z = simplex_project(&trial);
            let fz = self.value(&z);
            let model = fy
                + z.iter()
                    .zip(y)
                    .zip(&gy)
                    .map(|((zv, yv), g)| g * (zv - yv) + 0.5 * *lipschitz * (zv - yv) * (zv - yv))
                    .sum::<f64>();
            if fz <= model + 1e-12 * fy.abs().max(1.0) || *lipschitz > 1e300 {
                return (z, fz);
            }
            *lipschitz /= backtrack;
        }
    }
}

/// Solves the weight subproblem starting from uniform weights.
pub fn solve_w_apg(
    p_views: &[Matrix],
    q_views: &[Matrix],
    lambda: f64,
    config: &ApgConfig,
) -> Result<ApgOutcome> {
    let start = vec![1.0 / p_views.len().max(1) as f64; p_views.len()];
    solve_w_apg_from(p_views, q_views, lambda, config, &start)
}

/// Monotone FISTA with backtracking on the simplex-constrained subproblem.
///
/// The extrapolated point can leave the region where the fused target is
/// non-negative; momentum restarts from the current iterate when it does.
pub fn solve_w_apg_from(
    p_views: &[Matrix],
    q_views: &[Matrix],
    lambda: f64,
    config: &ApgConfig,
    start: &[f64],
) -> Result<ApgOutcome> {
    config.validate()?;
    let problem = WeightProblem::new(p_views, q_views, lambda)?;
    check_weights(p_views.len(), start, "solve_w_apg")?;
    let mut x = simplex_project(start);
    let mut fx = problem.value(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite(format!(
            "weight objective is {fx} at the start point"
        )));
    }
    let mut trace = vec![fx];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lipschitz = 1.0 / config.step_init;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let (z, fz) = problem.gradient_step(&y, &mut lipschitz, config.backtrack_factor);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let prev = x.clone();
        let accepted = fz <= fx;
        let decrease = fx - fz;
        if accepted {
            x = z.clone();
            fx = fz;
        }
        trace.push(fx);
        y = x
            .iter()
            .zip(&z)
            .zip(&prev)
            .map(|((xv, zv), pv)| xv + (t / t_next) * (zv - xv) + ((t - 1.0) / t_next) * (xv - pv))
            .collect();
        t = t_next;
        if y.iter().any(|&v| !(v > 0.0)) {
            y = x.clone();
            t = 1.0;
        }
        let step: f64 = z
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let tol = config.rel_tol * fx.abs().max(1.0);
        if accepted && (decrease <= tol || step <= 1e-15) {
            // a stalled accelerated step is not enough; a plain step from x must stall too
            let (g, fg) = problem.gradient_step(&x, &mut lipschitz, config.backtrack_factor);
            let stalled = fg >= fx - tol;
            if fg < fx {
                x = g;
                fx = fg;
                *trace.last_mut().expect("trace starts non-empty") = fx;
            }
            if stalled {
                converged = true;
                break;
            }
            y = x.clone();
            t = 1.0;
        }
    }
    if !converged {
        log::warn!("weight solve stopped after {iterations} iterations without meeting rel_tol");
    }
    Ok(ApgOutcome {
        weights: ViewWeights::new(x, lambda)?,
        objective: fx,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Encoders, centroids and view weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmjcTState {
    pub branches: Vec<ViewBranch>,
    pub weights: ViewWeights,
}

impl DmjcTState {
    /// Uniform weights `1/V`.
    pub fn new(branches: Vec<ViewBranch>, lambda: f64) -> Result<Self> {
        let k = branches.first().ok_or(Error::Empty("views"))?.clusters();
        if branches.iter().any(|b| b.clusters() != k) {
            return Err(Error::InvalidArgument(
                "views disagree on the cluster count".into(),
            ));
        }
        let weights = ViewWeights::uniform(branches.len(), lambda)?;
        Ok(Self { branches, weights })
    }

    /// Per-view soft assignments over full data.
    pub fn soft_assignments(&self, views: &[Matrix], alpha: f64) -> Result<Vec<Matrix>> {
        if views.len() != self.branches.len() {
            return Err(shape_err(
                "dmjc_t",
                format!("{} views", self.branches.len()),
                views.len(),
            ));
        }
        self.branches
            .iter()
            .zip(views)
            .map(|(b, x)| soft_assignment(&b.encoder.forward(x)?, &b.centroids, alpha))
            .collect()
    }

    /// Fused target over full data.
    pub fn fused_target(&self, views: &[Matrix], alpha: f64, gamma: f64) -> Result<Matrix> {
        let p_views = self
            .soft_assignments(views, alpha)?
            .iter()
            .map(|q| target_distribution(q, gamma))
            .collect::<Result<Vec<_>>>()?;
        fused_target(&p_views, self.weights.as_slice())
    }
}

/// `argmax_j p_ij` of the fused target; ties go to the lowest index.
pub fn predict_t(
    state: &DmjcTState,
    views: &[Matrix],
    alpha: f64,
    gamma: f64,
) -> Result<Vec<usize>> {
    Ok(state.fused_target(views, alpha, gamma)?.argmax_rows())
}

/// Weight-subproblem objective around one w-step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightStep {
    pub epoch: usize,
    pub before: f64,
    pub after: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmjcTOutcome {
    pub state: DmjcTState,
    pub history: TrainHistory,
    pub weight_steps: Vec<WeightStep>,
    pub labels: Vec<usize>,
}

/// Alternating training. Each epoch recomputes every `Q^(v)`, refreshes the
/// per-view targets every `update_interval` epochs, fuses them with the
/// current `w`, records history, checks the stop rule, sweeps minibatches on
/// every view with `P` frozen, then re-solves `w` warm-started from its
/// current value.
pub fn dmjc_t_train(
    mut state: DmjcTState,
    views: &[Matrix],
    config: &TrainConfig,
    apg: &ApgConfig,
    rng: &mut RngState,
    truth: Option<&[usize]>,
    mut observer: impl FnMut(&EpochSnapshot<'_>),
) -> Result<DmjcTOutcome> {
    config.validate()?;
    apg.validate()?;
    let hyper = &config.hyper;
    let n = common_rows(views)?;
    check_truth(truth, n)?;
    let lambda = state.weights.lambda();
    let mut optimizers: Vec<OptimizerState> = state
        .branches
        .iter()
        .map(|_| OptimizerState::new(config.optimizer))
        .collect();
    let mut history = TrainHistory::default();
    let mut weight_steps = Vec::new();
    let mut p_views: Option<Vec<Matrix>> = None;
    let mut target_labels: Option<Vec<usize>> = None;

    for epoch in 0..hyper.max_epochs {
        let diverged = as_divergence(epoch);
        let q_views = state
            .soft_assignments(views, hyper.alpha)
            .map_err(&diverged)?;
        let refresh = p_views.is_none() || epoch % hyper.update_interval == 0;
        if refresh {
            p_views = Some(
                q_views
                    .iter()
                    .map(|q| target_distribution(q, hyper.gamma))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let per_view = p_views.as_ref().expect("set above");
        let fused = fused_target(per_view, state.weights.as_slice())?;
        let labels = fused.argmax_rows();
        let mut change = None;
        if refresh {
            if let Some(prev) = &target_labels {
                change = Some(label_change(prev, &labels));
            }
            target_labels = Some(labels.clone());
        }
        let loss = objective_t(per_view, &q_views, state.weights.as_slice(), lambda)?;
        ensure_finite_loss(loss, epoch)?;

        let acc_views = match truth {
            Some(_) => q_views
                .iter()
                .filter_map(|q| accuracy_or_none(truth, &q.argmax_rows()))
                .collect(),
            None => Vec::new(),
        };
        history.records.push(EpochRecord {
            epoch,
            loss,
            weights: state.weights.as_slice().to_vec(),
            acc_views,
            acc_fused: accuracy_or_none(truth, &labels),
            label_change: change,
        });
        let mut targets = per_view.clone();
        targets.push(fused.clone());
        let w_row = Matrix::row_vector(state.weights.as_slice());
        observer(&EpochSnapshot {
            epoch,
            soft: &q_views,
            targets: &targets,
            simplex_rows: &w_row,
        });
        if change.is_some_and(|c| c < hyper.label_change_tol) {
            history.converged = true;
            break;
        }

        for chunk in rng.permutation(n).chunks(config.batch_size) {
            let p_batch = fused.select_rows(chunk);
            let inv = 1.0 / chunk.len() as f64;
            for ((branch, opt), x) in state.branches.iter_mut().zip(&mut optimizers).zip(views) {
                let cache = branch
                    .encoder
                    .forward_cached(&x.select_rows(chunk))
                    .map_err(&diverged)?;
                let (mut grad_z, mut grad_mu) = dmjc_t_network_gradients(
                    cache.output(),
                    &branch.centroids,
                    &p_batch,
                    hyper.alpha,
                )?;
                grad_z.scale(inv);
                grad_mu.scale(inv);
                branch
                    .apply_step(opt, &cache, &grad_z, &grad_mu)
                    .map_err(&diverged)?;
            }
        }

        let q_after = state
            .soft_assignments(views, hyper.alpha)
            .map_err(&diverged)?;
        let before = objective_t(per_view, &q_after, state.weights.as_slice(), lambda)?;
        let step = if state.branches.len() == 1 {
            WeightStep {
                epoch,
                before,
                after: before,
                iterations: 0,
                converged: true,
            }
        } else {
            let solved =
                solve_w_apg_from(per_view, &q_after, lambda, apg, state.weights.as_slice())
                    .map_err(&diverged)?;
            let after = objective_t(per_view, &q_after, solved.weights.as_slice(), lambda)?;
            state.weights = solved.weights;
            WeightStep {
                epoch,
                before,
                after,
                iterations: solved.iterations,
                converged: solved.converged,
            }
        };
        weight_steps.push(step);
    }

    let labels = predict_t(&state, views, hyper.alpha, hyper.gamma)?;
    Ok(DmjcTOutcome {
        state,
        history,
        weight_steps,
        labels,
    })
}
