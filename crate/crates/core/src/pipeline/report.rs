//! Run reports and their on-disk form.
//!
//! `emit_report` writes three files into the output directory:
//!
//! - `metrics.json`: everything except labels and history.
//! - `labels.csv`: one predicted label per sample under a `label` header.
//! - `history.csv`: `epoch, loss, label_change, w_1..w_V`, then
//!   `acc_view_1..acc_view_V, acc_fused` when ground truth was supplied.
//!
//! All files are first written under temporary names and then renamed, so a
//! failed run never leaves a mix of old and new files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::ClusteringScores;
use crate::pipeline::config::Method;
use crate::pipeline::data::{load_labels, DataError};
use crate::train::EpochRecord;

pub const METRICS_FILE: &str = "metrics.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub clusters: usize,
    pub samples: usize,
    /// Views used by the method.
    pub views: usize,
    pub seed: u64,
    pub scores: Option<ClusteringScores>,
    pub final_loss: Option<f64>,
    pub epochs_run: usize,
    pub converged: bool,
    /// Weights at the end of training: `w` for DMJC-T, `Σ_j π_j^(v)` for DMJC-S.
    pub final_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub summary: RunSummary,
    pub history: Vec<EpochRecord>,
    pub labels: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read report: {0}")]
    Read(String),
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn history_csv(report: &RunReport) -> String {
    let v = report.summary.views;
    let with_acc = report.summary.scores.is_some();
    let mut header = vec!["epoch".to_string(), "loss".into(), "label_change".into()];
    header.extend((1..=v).map(|i| format!("w_{i}")));
    if with_acc {
        header.extend((1..=v).map(|i| format!("acc_view_{i}")));
        header.push("acc_fused".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in &report.history {
        let mut row = vec![
            r.epoch.to_string(),
            r.loss.to_string(),
            fmt_opt(r.label_change),
        ];
        row.extend(r.weights.iter().map(f64::to_string));
        if with_acc {
            row.extend(r.acc_views.iter().map(f64::to_string));
            row.push(fmt_opt(r.acc_fused));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn labels_csv(labels: &[usize]) -> String {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

pub fn metrics_json(summary: &RunSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serialises");
    s.push('\n');
    s
}

/// Writes all report files, replacing earlier ones atomically per file.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<(), ReportError> {
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Write { path, source }
    };
    std::fs::create_dir_all(dir).map_err(write_err(dir))?;
    let files = [
        (METRICS_FILE, metrics_json(&report.summary)),
        (LABELS_FILE, labels_csv(&report.labels)),
        (HISTORY_FILE, history_csv(report)),
    ];
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    for (name, content) in &files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, content) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            let _ = std::fs::remove_file(&tmp);
            return Err(write_err(&tmp)(e));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in &staged {
        std::fs::rename(tmp, dest).map_err(write_err(dest))?;
    }
    Ok(())
}

fn parse_opt(field: &str) -> Result<Option<f64>, ReportError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| ReportError::Read(format!("bad number {field:?} in history")))
}

/// Reads a report written by [`emit_report`].
pub fn load_report(dir: &Path) -> Result<RunReport, ReportError> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name))
            .map_err(|e| ReportError::Read(format!("{name}: {e}")))
    };
    let summary: RunSummary =
        serde_json::from_str(&read(METRICS_FILE)?).map_err(|e| ReportError::Read(e.to_string()))?;
    let labels = match load_labels(&dir.join(LABELS_FILE)) {
        Ok(l) => l,
        Err(DataError::Empty { .. }) => Vec::new(),
        Err(e) => return Err(ReportError::Read(e.to_string())),
    };
    let v = summary.views;
    let with_acc = summary.scores.is_some();
    let text = read(HISTORY_FILE)?;
    let mut history = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let expected = 3 + v + if with_acc { v + 1 } else { 0 };
        if f.len() != expected {
            return Err(ReportError::Read(format!(
                "history row has {} fields, expected {expected}",
                f.len()
            )));
        }
        let num = |s: &str| {
            parse_opt(s)?.ok_or_else(|| ReportError::Read("missing value in history".into()))
        };
        let epoch = f[0]
            .parse()
            .map_err(|_| ReportError::Read(format!("bad epoch {:?}", f[0])))?;
        let weights = f[3..3 + v]
            .iter()
            .map(|s| num(s))
            .collect::<Result<_, _>>()?;
        let (acc_views, acc_fused) = if with_acc {
            (
                f[3 + v..3 + 2 * v]
                    .iter()
                    .map(|s| num(s))
                    .collect::<Result<_, _>>()?,
                parse_opt(f[3 + 2 * v])?,
            )
        } else {
            (Vec::new(), None)
        };
        history.push(EpochRecord {
            epoch,
            loss: num(f[1])?,
            weights,
            acc_views,
            acc_fused,
            label_change: parse_opt(f[2])?,
        });
    }
    Ok(RunReport {
        summary,
        history,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(with_acc: bool) -> RunReport {
        RunReport {
            summary: RunSummary {
                method: Method::DmjcT,
                clusters: 2,
                samples: 3,
                views: 2,
                seed: 7,
                scores: with_acc.then_some(ClusteringScores {
                    acc: 1.0,
                    nmi: 0.1 + 0.2,
                    ari: -0.5,
                }),
                final_loss: Some(0.123456789012345),
                epochs_run: 2,
                converged: false,
                final_weights: vec![0.3, 0.7],
            },
            history: (0..2)
                .map(|e| EpochRecord {
                    epoch: e,
                    loss: 1.0 / (e as f64 + 3.0),
                    weights: vec![0.3, 0.7],
                    acc_views: if with_acc {
                        vec![0.5, 2.0 / 3.0]
                    } else {
                        vec![]
                    },
                    acc_fused: with_acc.then_some(1.0),
                    label_change: (e > 0).then_some(0.25),
                })
                .collect(),
            labels: vec![1, 0, 1],
        }
    }

    #[test]
    fn round_trip_through_files() {
        for with_acc in [true, false] {
            let dir = tempfile::tempdir().unwrap();
            let report = sample(with_acc);
            emit_report(&report, dir.path()).unwrap();
            assert_eq!(load_report(dir.path()).unwrap(), report);
            let history = std::fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
            assert_eq!(history.lines().count(), report.history.len() + 1);
        }
    }

    #[test]
    fn json_shape() {
        let json = metrics_json(&sample(true).summary);
        assert!(json.contains("\"acc\": 1.0"));
        let method = json.find("\"method\"").unwrap();
        let scores = json.find("\"scores\"").unwrap();
        assert!(method < scores);
    }

    #[test]
    fn rewrite_replaces_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = sample(true);
        emit_report(&report, dir.path()).unwrap();
        report.labels = vec![0, 0, 0];
        emit_report(&report, dir.path()).unwrap();
        assert_eq!(load_report(dir.path()).unwrap().labels, vec![0, 0, 0]);
        let leftovers = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .ends_with(".tmp")
            })
            .count();
        assert_eq!(leftovers, 0);
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        assert!(emit_report(&sample(false), &blocker.join("sub")).is_err());
    }
}
