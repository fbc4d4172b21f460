//! TOML run configuration.
//!
//! ```toml
//! method = "dmjc_t"
//! clusters = 4
//! seed = 7
//! labels_file = "labels.csv"
//! output_dir = "out"
//!
//! [[views]]
//! feature_file = "view_1.csv"
//! encoder_dims = [8, 2]
//! normalization = "standardize"
//!
//! [joint]
//! optimizer = "adagrad"
//! lr = 0.01
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every section except `views` may be omitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assignment::DecHyper;
use crate::autoencoder::PretrainConfig;
use crate::dmjc_t::{ApgConfig, DEFAULT_LAMBDA};
use crate::kmeans::KmeansConfig;
use crate::numerics::OptimizerKind;
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Joint single-view training on `view`.
    Dec,
    DmjcS,
    DmjcT,
    /// K-means on one pretrained view embedding.
    SView,
    /// K-means on all pretrained view embeddings, concatenated.
    SAllViews,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dec => "dec",
            Method::DmjcS => "dmjc_s",
            Method::DmjcT => "dmjc_t",
            Method::SView => "s_view",
            Method::SAllViews => "s_all_views",
        }
    }

    /// Whether the method uses a single view only.
    pub fn single_view(self) -> bool {
        matches!(self, Method::Dec | Method::SView)
    }
}

impl std::str::FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Method::Dec,
            Method::DmjcS,
            Method::DmjcT,
            Method::SView,
            Method::SAllViews,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| ConfigError::Invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Per-column min-max scaling to [0, 1].
    UnitInterval,
    /// Per-column zero mean, unit variance.
    Standardize,
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewConfig {
    pub feature_file: PathBuf,
    /// Layer widths after the input, ending with the embedding width.
    pub encoder_dims: Vec<usize>,
    #[serde(default)]
    pub normalization: Normalization,
}

/// Self-training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperSettings {
    pub alpha: f64,
    pub gamma: f64,
    pub update_interval: usize,
    pub label_change_tol: f64,
}

impl Default for HyperSettings {
    fn default() -> Self {
        let d = DecHyper::default();
        Self {
            alpha: d.alpha,
            gamma: d.gamma,
            update_interval: d.update_interval,
            label_change_tol: d.label_change_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam learning rate.
    pub lr: f64,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.optimizer.lr(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    SgdMomentum,
    Adam,
    Adagrad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointSettings {
    pub optimizer: OptimizerName,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
}

impl Default for JointSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            optimizer: OptimizerName::Adagrad,
            lr: d.optimizer.lr(),
            batch_size: d.batch_size,
            max_epochs: d.hyper.max_epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub clusters: usize,
    #[serde(default)]
    pub seed: u64,
    /// View used by `dec` and `s_view` (0-based).
    #[serde(default)]
    pub view: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub views: Vec<ViewConfig>,
    #[serde(default)]
    pub hyper: HyperSettings,
    #[serde(default)]
    pub pretrain: PretrainSettings,
    #[serde(default)]
    pub joint: JointSettings,
    #[serde(default)]
    pub apg: ApgConfig,
    #[serde(default)]
    pub kmeans: KmeansConfig,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

impl RunConfig {
    /// Parses without touching the filesystem.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates, including that every referenced input exists.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        config.check_files()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for view in &mut self.views {
            join(&mut view.feature_file);
        }
        if let Some(labels) = &mut self.labels_file {
            join(labels);
        }
        join(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.views.is_empty() {
            return invalid("at least one view is required".into());
        }
        if self.clusters == 0 {
            return invalid("clusters must be at least 1".into());
        }
        if self.method.single_view() && self.view >= self.views.len() {
            return invalid(format!(
                "view {} out of range for {} views",
                self.view,
                self.views.len()
            ));
        }
        if let Some(i) = self
            .views
            .iter()
            .position(|v| v.encoder_dims.contains(&0) || v.encoder_dims.is_empty())
        {
            return invalid(format!(
                "view {i}: encoder_dims must be a non-empty list of positive widths"
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.pretrain.epochs == 0 || self.pretrain.batch_size == 0 || !(self.pretrain.lr > 0.0) {
            return invalid("pretrain epochs, batch_size and lr must be positive".into());
        }
        if self.joint.batch_size == 0 || !(self.joint.lr > 0.0) {
            return invalid("joint batch_size and lr must be positive".into());
        }
        self.train_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.apg
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn check_files(&self) -> Result<(), ConfigError> {
        let files = self
            .views
            .iter()
            .map(|v| &v.feature_file)
            .chain(&self.labels_file);
        for f in files {
            if !f.is_file() {
                return Err(ConfigError::MissingFile(f.clone()));
            }
        }
        Ok(())
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain.epochs,
            batch_size: self.pretrain.batch_size,
            optimizer: OptimizerKind::adam().with_lr(self.pretrain.lr),
            keep_decoder: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let optimizer = match self.joint.optimizer {
            OptimizerName::SgdMomentum => OptimizerKind::sgd_momentum(),
            OptimizerName::Adam => OptimizerKind::adam(),
            OptimizerName::Adagrad => OptimizerKind::adagrad(),
        }
        .with_lr(self.joint.lr);
        TrainConfig {
            hyper: DecHyper {
                alpha: self.hyper.alpha,
                gamma: self.hyper.gamma,
                update_interval: self.hyper.update_interval,
                max_epochs: self.joint.max_epochs,
                label_change_tol: self.hyper.label_change_tol,
            },
            optimizer,
            batch_size: self.joint.batch_size,
        }
    }
}
