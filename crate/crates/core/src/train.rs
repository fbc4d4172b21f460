//! Pieces shared by the DEC, DMJC-S and DMJC-T training loops.

use serde::{Deserialize, Serialize};

use crate::assignment::DecHyper;
use crate::autoencoder::{ForwardCache, Mlp};
use crate::error::{Error, Result};
use crate::metrics::clustering_accuracy;
use crate::numerics::{Matrix, OptimizerKind, OptimizerState};

/// One view's encoder together with its cluster centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewBranch {
    pub encoder: Mlp,
    pub centroids: Matrix,
}

impl ViewBranch {
    pub fn new(encoder: Mlp, centroids: Matrix) -> Result<Self> {
        if centroids.cols() != encoder.output_dim() {
            return Err(crate::error::shape_err(
                "ViewBranch::new",
                format!("centroids with {} columns", encoder.output_dim()),
                centroids.cols(),
            ));
        }
        Ok(Self { encoder, centroids })
    }

    pub fn clusters(&self) -> usize {
        self.centroids.rows()
    }

    /// Backpropagates `grad_z` into the encoder and steps encoder + centroids.
    pub(crate) fn apply_step(
        &mut self,
        optimizer: &mut OptimizerState,
        cache: &ForwardCache,
        grad_z: &Matrix,
        grad_mu: &Matrix,
    ) -> Result<()> {
        let (grads, _) = self.encoder.backward(cache, grad_z)?;
        let mut g = grads.as_refs();
        g.push(grad_mu);
        let mut params = self.encoder.params_mut();
        params.push(&mut self.centroids);
        optimizer.step(&mut params, &g)
    }
}

/// Settings for the joint (clustering) stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: DecHyper,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hyper: DecHyper::default(),
            optimizer: OptimizerKind::adagrad(),
            batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record, taken at the start of the epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Per-view weight: 1 for DEC, Σ_j π_j^(v) for DMJC-S, w_v for DMJC-T.
    pub weights: Vec<f64>,
    /// Accuracy of each view's own assignment; empty without labels.
    pub acc_views: Vec<f64>,
    pub acc_fused: Option<f64>,
    /// Fraction of hard labels that changed since the previous target update.
    pub label_change: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Stopped by the label-change criterion rather than `max_epochs`.
    pub converged: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

/// Read-only view of the training state handed to observers once per epoch.
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    /// Every soft-assignment matrix computed this epoch (fused first for DMJC-S).
    pub soft: &'a [Matrix],
    /// Every target-distribution matrix computed this epoch.
    pub targets: &'a [Matrix],
    /// Fusion weights; each row must lie on the simplex.
    pub simplex_rows: &'a Matrix,
}

pub(crate) fn label_change(prev: &[usize], current: &[usize]) -> f64 {
    if current.is_empty() {
        return 0.0;
    }
    let changed = prev.iter().zip(current).filter(|(a, b)| a != b).count();
    changed as f64 / current.len() as f64
}

pub(crate) fn accuracy_or_none(truth: Option<&[usize]>, labels: &[usize]) -> Option<f64> {
    truth.map(|t| clustering_accuracy(labels, t).expect("label lengths checked up front"))
}

pub(crate) fn check_truth(truth: Option<&[usize]>, n: usize) -> Result<()> {
    match truth {
        Some(t) if t.len() != n => Err(Error::InvalidArgument(format!(
            "{} ground-truth labels for {n} samples",
            t.len()
        ))),
        _ => Ok(()),
    }
}

/// Maps numerical failures inside a training epoch to a divergence error.
pub(crate) fn as_divergence(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(detail) => Error::Divergence { epoch, detail },
        other => other,
    }
}

pub(crate) fn ensure_finite_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            epoch,
            detail: format!("objective is {loss}"),
        })
    }
}

/// Shared sample count of all views.
pub(crate) fn common_rows(views: &[Matrix]) -> Result<usize> {
    let n = views.first().ok_or(Error::Empty("views"))?.rows();
    if let Some((i, v)) = views.iter().enumerate().find(|(_, v)| v.rows() != n) {
        return Err(Error::InvalidArgument(format!(
            "view {i} has {} samples, view 0 has {n}",
            v.rows()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("view samples"));
    }
    Ok(n)
}
