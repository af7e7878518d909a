//! Classifiers for covert-channel detection: a random forest and a
//! gradient boosting machine, both trained on the packet feature matrix,
//! plus a versioned JSON model format and the two-stage detection pipeline.
//!
//! Class index conventions are fixed here. Binary: 0 normal, 1 covert.
//! Multiclass: 0 HopLimit, 1 Address, 2 Length, 3 FlowLabel, 4 Normal.

mod boosting;
mod forest;
mod metrics;
mod tree;

pub use boosting::{GradientBoostingModel, GradientBoostingParams};
pub use forest::{balanced_class_weights, RandomForestModel, RandomForestParams};
pub use metrics::{evaluate, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use tree::{DecisionTree, Node, TreeParams};

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::ChannelKind;
use crate::features::{FeatureMatrix, NormalizationParams, FEATURE_NAMES};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file {path} is not usable: {message}")]
    BadModel { path: String, message: String },
    #[error("model format version {found} is not supported (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels contain a single class; nothing to separate")]
    DegenerateTraining,
    #[error("prediction and actual label lists differ in length: {predictions} vs {actuals}")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("wrong model for this stage: expected a {expected} model, got {got}")]
    TaskMismatch { expected: TaskKind, got: TaskKind },
}

// ---- class conventions ----

pub const MULTICLASS_ORDER: [ChannelKind; 5] = [
    ChannelKind::HopLimit,
    ChannelKind::Address,
    ChannelKind::Length,
    ChannelKind::FlowLabel,
    ChannelKind::Normal,
];

pub const BINARY_CLASS_NAMES: [&str; 2] = ["normal", "covert"];

pub fn multiclass_index(kind: ChannelKind) -> usize {
    MULTICLASS_ORDER
        .iter()
        .position(|&k| k == kind)
        .expect("every channel kind has a class index")
}

pub fn binary_index(kind: ChannelKind) -> usize {
    (kind != ChannelKind::Normal) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Normal versus covert, any channel.
    Binary,
    /// Per-channel classes plus normal.
    Multiclass,
}

impl TaskKind {
    pub fn n_classes(self) -> usize {
        match self {
            TaskKind::Binary => 2,
            TaskKind::Multiclass => MULTICLASS_ORDER.len(),
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            TaskKind::Binary => BINARY_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            TaskKind::Multiclass => MULTICLASS_ORDER
                .iter()
                .map(|k| k.label().to_string())
                .collect(),
        }
    }

    /// Map packet labels to this task's class indices.
    pub fn targets(self, labels: &[ChannelKind]) -> Vec<usize> {
        match self {
            TaskKind::Binary => labels.iter().map(|&k| binary_index(k)).collect(),
            TaskKind::Multiclass => labels.iter().map(|&k| multiclass_index(k)).collect(),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Binary => "binary",
            TaskKind::Multiclass => "multiclass",
        })
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(TaskKind::Binary),
            "multiclass" => Ok(TaskKind::Multiclass),
            other => Err(format!("unknown task {other:?} (binary, multiclass)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    RandomForest,
    GradientBoosting,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::RandomForest => "random-forest",
            ModelKind::GradientBoosting => "gradient-boosting",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random-forest" | "rf" => Ok(ModelKind::RandomForest),
            "gradient-boosting" | "gb" => Ok(ModelKind::GradientBoosting),
            other => Err(format!(
                "unknown model kind {other:?} (random-forest, gradient-boosting)"
            )),
        }
    }
}

// ---- persisted model ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor<F> {
    RandomForest(RandomForestModel<F>),
    GradientBoosting(GradientBoostingModel<F>),
}

impl<F: Scalar> Predictor<F> {
    fn predict_row(&self, row: &[F]) -> usize {
        match self {
            Predictor::RandomForest(m) => m.predict_row(row),
            Predictor::GradientBoosting(m) => m.predict_row(row),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Predictor::RandomForest(m) => m.n_classes,
            Predictor::GradientBoosting(m) => m.n_classes,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Predictor::RandomForest(_) => ModelKind::RandomForest,
            Predictor::GradientBoosting(_) => ModelKind::GradientBoosting,
        }
    }
}

/// A trained classifier with everything needed to score fresh captures:
/// the normalization fitted on its training set, the feature schema, and
/// the class names in index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<F> {
    pub format_version: u32,
    pub task: TaskKind,
    pub feature_names: Vec<String>,
    pub class_labels: Vec<String>,
    pub normalization: NormalizationParams<F>,
    pub predictor: Predictor<F>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

impl<F: Scalar> Model<F> {
    fn assemble(
        task: TaskKind,
        normalization: NormalizationParams<F>,
        predictor: Predictor<F>,
    ) -> Result<Self, MlError> {
        if predictor.n_classes() != task.n_classes() {
            return Err(MlError::BadParams(format!(
                "{} classes in predictor but task {task} has {}",
                predictor.n_classes(),
                task.n_classes()
            )));
        }
        Ok(Model {
            format_version: MODEL_FORMAT_VERSION,
            task,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            class_labels: task.class_names(),
            normalization,
            predictor,
        })
    }

    /// Fit normalization and a random forest on the labeled matrix.
    pub fn fit_random_forest(
        task: TaskKind,
        train: &FeatureMatrix<F>,
        params: &RandomForestParams<F>,
    ) -> Result<Self, MlError> {
        if train.is_empty() {
            return Err(MlError::EmptyTrainingSet);
        }
        let normalization = NormalizationParams::fit(train);
        let mut prepared = train.clone();
        normalization.apply(&mut prepared);
        let y = task.targets(&prepared.labels);
        let forest = RandomForestModel::fit(&prepared.rows, &y, task.n_classes(), params)?;
        Self::assemble(task, normalization, Predictor::RandomForest(forest))
    }

    /// Fit normalization and a gradient boosting machine on the labeled
    /// matrix.
    pub fn fit_gradient_boosting(
        task: TaskKind,
        train: &FeatureMatrix<F>,
        params: &GradientBoostingParams,
    ) -> Result<Self, MlError> {
        if train.is_empty() {
            return Err(MlError::EmptyTrainingSet);
        }
        let normalization = NormalizationParams::fit(train);
        let mut prepared = train.clone();
        normalization.apply(&mut prepared);
        let y = task.targets(&prepared.labels);
        let gb = GradientBoostingModel::fit(&prepared.rows, &y, task.n_classes(), params)?;
        Self::assemble(task, normalization, Predictor::GradientBoosting(gb))
    }

    pub fn predict_rows(&self, rows: &[Vec<F>]) -> Result<Vec<usize>, MlError> {
        let d = self.feature_names.len();
        rows.iter()
            .map(|row| {
                if row.len() != d {
                    return Err(MlError::ShapeMismatch {
                        expected: d,
                        got: row.len(),
                    });
                }
                let mut prepared = row.clone();
                self.normalization.apply_row(&mut prepared);
                Ok(self.predictor.predict_row(&prepared))
            })
            .collect()
    }

    pub fn predict(&self, matrix: &FeatureMatrix<F>) -> Result<Vec<usize>, MlError> {
        self.predict_rows(&matrix.rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlError> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).expect("model serializes");
        fs::write(path, json).map_err(|source| MlError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MlError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| MlError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let bad = |message: String| MlError::BadModel {
            path: path.display().to_string(),
            message,
        };
        let probe: VersionProbe =
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(MlError::UnsupportedVersion {
                found: probe.format_version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

// ---- two-stage pipeline ----

/// Stage 1 gates every packet as normal or covert; stage 2 assigns covert
/// packets a channel. Stage 2 may also answer Normal, overturning a stage-1
/// false alarm; a packet gated normal is final and never reaches stage 2.
pub fn run_two_stage_pipeline<F: Scalar>(
    stage1: &Model<F>,
    stage2: &Model<F>,
    matrix: &FeatureMatrix<F>,
) -> Result<Vec<ChannelKind>, MlError> {
    if stage1.task != TaskKind::Binary {
        return Err(MlError::TaskMismatch {
            expected: TaskKind::Binary,
            got: stage1.task,
        });
    }
    if stage2.task != TaskKind::Multiclass {
        return Err(MlError::TaskMismatch {
            expected: TaskKind::Multiclass,
            got: stage2.task,
        });
    }
    let gate = stage1.predict(matrix)?;
    let covert_rows: Vec<Vec<F>> = matrix
        .rows
        .iter()
        .zip(&gate)
        .filter(|(_, &g)| g == 1)
        .map(|(row, _)| row.clone())
        .collect();
    let refined = stage2.predict_rows(&covert_rows)?;
    let mut refined_iter = refined.into_iter();
    Ok(gate
        .iter()
        .map(|&g| {
            if g == 0 {
                ChannelKind::Normal
            } else {
                MULTICLASS_ORDER[refined_iter.next().expect("one refinement per covert packet")]
            }
        })
        .collect())
}
