//! End-to-end runs: load, pretrain, initialise, train, predict, evaluate,
//! report.

use std::fmt;

use rayon::prelude::*;

use crate::assignment::{dec_train, init_view_centroids};
use crate::autoencoder::{pretrain, MlpSpec};
use crate::dmjc_s::{dmjc_s_train, DmjcSState};
use crate::dmjc_t::{dmjc_t_train, DmjcTState};
use crate::error::Error;
use crate::kmeans::kmeans;
use crate::metrics::evaluate;
use crate::numerics::{Matrix, RngState};
use crate::pipeline::config::{ConfigError, Method, RunConfig};
use crate::pipeline::data::{load_feature_matrix, load_labels, normalize, DataError};
use crate::pipeline::report::{emit_report, ReportError, RunReport, RunSummary};
use crate::train::{EpochRecord, TrainHistory, ViewBranch};

/// RNG streams derived from the run seed. Every view pretrains from the same
/// stream, so a view's encoder depends only on its data, architecture and
/// the seed.
const PRETRAIN_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Load,
    Pretrain,
    Initialize,
    Train,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Pretrain => "pretrain",
            Stage::Initialize => "initialize",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(#[from] ConfigError),
    #[error("[{stage}] {source}")]
    Data { stage: Stage, source: DataError },
    #[error("[{stage}] {source}")]
    Numeric { stage: Stage, source: Error },
    #[error("[report] {0}")]
    Report(#[from] ReportError),
}

impl PipelineError {
    /// 1 configuration, 2 data or I/O, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data { .. } | PipelineError::Report(_) => 2,
            PipelineError::Numeric { source, .. } => match source {
                Error::Divergence { .. } | Error::NonFinite(_) => 3,
                _ => 2,
            },
        }
    }
}

fn at(stage: Stage) -> impl Fn(Error) -> PipelineError {
    move |source| PipelineError::Numeric { stage, source }
}

fn inconsistent(msg: String) -> PipelineError {
    PipelineError::Data {
        stage: Stage::Load,
        source: DataError::Inconsistent(msg),
    }
}

/// Loads the configured views and optional labels.
pub fn load_inputs(config: &RunConfig) -> Result<(Vec<Matrix>, Option<Vec<usize>>), PipelineError> {
    let load = |source| PipelineError::Data {
        stage: Stage::Load,
        source,
    };
    let views = config
        .views
        .iter()
        .map(|v| load_feature_matrix(&v.feature_file))
        .collect::<Result<Vec<_>, _>>()
        .map_err(load)?;
    let labels = config
        .labels_file
        .as_deref()
        .map(load_labels)
        .transpose()
        .map_err(load)?;
    Ok((views, labels))
}

/// Loads inputs, runs, and writes the report to `config.output_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let (views, labels) = load_inputs(config)?;
    let report = run_on_views(config, &views, labels.as_deref())?;
    emit_report(&report, &config.output_dir)?;
    Ok(report)
}

fn weights_of(history: &TrainHistory) -> Vec<f64> {
    history
        .records
        .last()
        .map(|r| r.weights.clone())
        .unwrap_or_default()
}

/// Runs every stage after loading on in-memory views. Nothing is written.
pub fn run_on_views(
    config: &RunConfig,
    views: &[Matrix],
    truth: Option<&[usize]>,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    if views.len() != config.views.len() {
        return Err(ConfigError::Invalid(format!(
            "{} views configured but {} supplied",
            config.views.len(),
            views.len()
        ))
        .into());
    }
    let n = views[0].rows();
    if let Some((i, v)) = views.iter().enumerate().find(|(_, v)| v.rows() != n) {
        return Err(inconsistent(format!(
            "view {i} has {} samples, view 0 has {n}",
            v.rows()
        )));
    }
    if let Some(t) = truth {
        if t.len() != n {
            return Err(inconsistent(format!("{} labels for {n} samples", t.len())));
        }
    }
    let used: Vec<usize> = if config.method.single_view() {
        vec![config.view]
    } else {
        (0..views.len()).collect()
    };
    let inputs: Vec<Matrix> = used
        .iter()
        .map(|&v| normalize(&views[v], config.views[v].normalization))
        .collect();

    let root = RngState::new(config.seed);
    let pretrain_config = config.pretrain_config();
    log::info!("pretraining {} view(s)", inputs.len());
    let encoders = used
        .par_iter()
        .zip(&inputs)
        .map(|(&v, x)| {
            let mut dims = vec![x.cols()];
            dims.extend(&config.views[v].encoder_dims);
            let spec = MlpSpec::encoder(dims)?;
            let mut rng = root.fork(PRETRAIN_STREAM);
            pretrain(&spec, x, &pretrain_config, &mut rng).map(|o| o.params.encoder)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(at(Stage::Pretrain))?;
    let embeddings = encoders
        .iter()
        .zip(&inputs)
        .map(|(e, x)| e.forward(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(at(Stage::Pretrain))?;

    let k = config.clusters;
    let mut init_rng = root.fork(INIT_STREAM);
    let mut train_rng = root.fork(TRAIN_STREAM);
    let train_config = config.train_config();
    let branches = |init_rng: &mut RngState| -> Result<Vec<ViewBranch>, PipelineError> {
        let init = init_view_centroids(&embeddings, k, &config.kmeans, init_rng)
            .map_err(at(Stage::Initialize))?;
        encoders
            .iter()
            .cloned()
            .zip(init.centroids)
            .map(|(e, c)| ViewBranch::new(e, c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(at(Stage::Initialize))
    };
    let trained = at(Stage::Train);
    log::info!("running {}", config.method.as_str());
    let (labels, history, final_weights): (Vec<usize>, TrainHistory, Vec<f64>) = match config.method
    {
        Method::SView | Method::SAllViews => {
            let refs: Vec<&Matrix> = embeddings.iter().collect();
            let joined = Matrix::hcat(&refs).map_err(at(Stage::Initialize))?;
            let result =
                kmeans(&joined, k, &config.kmeans, &mut init_rng).map_err(at(Stage::Initialize))?;
            (result.labels, TrainHistory::default(), Vec::new())
        }
        Method::Dec => {
            let branch = branches(&mut init_rng)?.remove(0);
            let out = dec_train(
                branch,
                &inputs[0],
                &train_config,
                &mut train_rng,
                truth,
                |_| {},
            )
            .map_err(trained)?;
            let w = weights_of(&out.history);
            (out.labels, out.history, w)
        }
        Method::DmjcS => {
            let state = DmjcSState::new(branches(&mut init_rng)?).map_err(at(Stage::Initialize))?;
            let out = dmjc_s_train(state, &inputs, &train_config, &mut train_rng, truth, |_| {})
                .map_err(trained)?;
            let pi = out.state.importance();
            let w = (0..pi.cols())
                .map(|v| (0..pi.rows()).map(|j| pi[(j, v)]).sum())
                .collect();
            (out.labels, out.history, w)
        }
        Method::DmjcT => {
            let state = DmjcTState::new(branches(&mut init_rng)?, config.lambda)
                .map_err(at(Stage::Initialize))?;
            let out = dmjc_t_train(
                state,
                &inputs,
                &train_config,
                &config.apg,
                &mut train_rng,
                truth,
                |_| {},
            )
            .map_err(trained)?;
            let w = out.state.weights.as_slice().to_vec();
            (out.labels, out.history, w)
        }
    };

    let scores = truth
        .map(|t| evaluate(&labels, t))
        .transpose()
        .map_err(at(Stage::Evaluate))?;
    let converged = history.converged;
    let history: Vec<EpochRecord> = history.records;
    Ok(RunReport {
        summary: RunSummary {
            method: config.method,
            clusters: k,
            samples: n,
            views: used.len(),
            seed: config.seed,
            scores,
            final_loss: history.last().map(|r| r.loss),
            epochs_run: history.len(),
            converged,
            final_weights,
        },
        history,
        labels,
    })
}
