//! Stage two: conventional classifiers over frozen embeddings.
//!
//! Linear models (logistic regression and a hinge-loss SVM) are trained by
//! seeded mini-batch gradient descent with a fixed summation order, so the
//! same data, config and seed give bit-identical weights everywhere. The
//! k-NN model stores unit-normalised instances and votes by cosine
//! similarity. All kinds accept any vector of matching width, which is what
//! lets a text-trained model score image embeddings unchanged.

mod knn;
mod linear;
mod persist;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::EmbeddingStore;
use crate::par::prelude::*;

pub use knn::{train_knn, KnnIndex};
pub use linear::{
    loss_and_gradient, train_linear_with_history, train_logistic, train_svm, update_incremental,
    LossGradient, REPLAY_RATIO,
};
pub use persist::{load_model, save_model, MODEL_FORMAT_VERSION};

/// Class label: 1 = harmful (positive class), 0 = non-harmful.
pub type Label = u8;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data has a single class; both labels 0 and 1 are required")]
    DegenerateData,
    #[error("dimension mismatch: model expects {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("{labels} labels for {rows} rows")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("k must be odd, got {0}")]
    EvenK(usize),
    #[error("invalid k: {0}")]
    InvalidK(String),
    #[error("operation not supported for {0} models")]
    UnsupportedKind(ClassifierKind),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("model format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logistic,
    LinearSvm,
    Knn,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::LinearSvm => "linear_svm",
            ClassifierKind::Knn => "knn",
        })
    }
}

impl ClassifierKind {
    /// Default decision threshold: probability 0.5, SVM margin 0, vote share 0.5.
    pub fn default_threshold(self) -> f64 {
        match self {
            ClassifierKind::Logistic | ClassifierKind::Knn => 0.5,
            ClassifierKind::LinearSvm => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch: usize,
    /// Weight each example by `n / (2 * n_class)` to offset class imbalance.
    #[serde(default)]
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 200,
            seed: 0,
            batch: 64,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ClassifierError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(ClassifierError::InvalidConfig(format!(
                "l2 must be non-negative, got {}",
                self.l2
            )));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch == 0 {
            return Err(ClassifierError::InvalidConfig("batch must be positive".into()));
        }
        Ok(())
    }

    /// The small sweep exposed to the evaluation harness:
    /// learning rate {0.01, 0.1} x l2 {0, 1e-4, 1e-2}.
    pub fn grid(base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(6);
        for lr in [0.01, 0.1] {
            for l2 in [0.0, 1e-4, 1e-2] {
                out.push(TrainConfig { learning_rate: lr, l2, ..base.clone() });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: Option<u64>,
    pub cfg: Option<TrainConfig>,
    pub train_corpus_hash: String,
    /// Number of incremental updates applied since the initial fit.
    #[serde(default)]
    pub updates: u32,
}

/// A trained decision function.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub dim: usize,
    /// Linear kinds only; empty for k-NN.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub knn: Option<KnnIndex>,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Probability (logistic), signed margin (SVM) or positive vote share (k-NN).
    pub score: f64,
    pub label: Label,
}

impl ClassifierModel {
    /// Same model with a different threshold. Scores are unaffected.
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        validate_threshold(self.kind, threshold)?;
        self.threshold = threshold;
        Ok(self)
    }

    pub fn label_for(&self, score: f64) -> Label {
        // Ties go to the harmful class.
        (score >= self.threshold) as Label
    }

    pub fn score(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(ClassifierError::DimMismatch { expected: self.dim, actual: x.len() });
        }
        Ok(match self.kind {
            ClassifierKind::Logistic => sigmoid(linear::margin(&self.weights, self.bias, x)),
            ClassifierKind::LinearSvm => linear::margin(&self.weights, self.bias, x),
            ClassifierKind::Knn => self
                .knn
                .as_ref()
                .expect("knn model without an index")
                .vote_share(x),
        })
    }
}

pub(crate) fn validate_threshold(kind: ClassifierKind, t: f64) -> Result<()> {
    let ok = match kind {
        ClassifierKind::Logistic => t > 0.0 && t < 1.0,
        ClassifierKind::Knn => t.is_finite() && (0.0..=1.0).contains(&t),
        ClassifierKind::LinearSvm => t.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(ClassifierError::InvalidThreshold(t))
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scores one vector. Vectors from any modality are accepted as long as the
/// width matches.
pub fn predict(model: &ClassifierModel, x: &[f32]) -> Result<Prediction> {
    let score = model.score(x)?;
    Ok(Prediction { score, label: model.label_for(score) })
}

/// Scores every row of `store`, in row order.
pub fn predict_batch(model: &ClassifierModel, store: &EmbeddingStore) -> Result<Vec<Prediction>> {
    if store.dim() != model.dim {
        return Err(ClassifierError::DimMismatch { expected: model.dim, actual: store.dim() });
    }
    (0..store.count())
        .into_par_iter()
        .map(|i| predict(model, store.row(i)))
        .collect()
}

pub(crate) fn check_labels(rows: usize, labels: &[Label]) -> Result<()> {
    if rows != labels.len() {
        return Err(ClassifierError::LabelCountMismatch { rows, labels: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(ClassifierError::InvalidLabel(bad));
    }
    Ok(())
}

/// SHA-256 over width, row bytes and labels; recorded as training provenance.
pub fn corpus_hash(dim: usize, data: &[f32], labels: &[Label]) -> String {
    let mut h = Sha256::new();
    h.update((dim as u64).to_le_bytes());
    for x in data {
        h.update(x.to_le_bytes());
    }
    h.update(labels);
    hex::encode(h.finalize())
}
