//! JSON model files:
//! `{format_version, kind, dim, weights[], bias, threshold, knn?, metadata{seed, cfg, train_corpus_hash}}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_threshold, ClassifierError, ClassifierKind, ClassifierModel, KnnIndex, ModelMetadata, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: ClassifierKind,
    dim: usize,
    weights: Vec<f64>,
    bias: f64,
    threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knn: Option<KnnIndex>,
    metadata: ModelMetadata,
}

impl ClassifierModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind,
            dim: self.dim,
            weights: self.weights.clone(),
            bias: self.bias,
            threshold: self.threshold,
            knn: self.knn.clone(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string(&file).expect("model serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile =
            serde_json::from_str(text).map_err(|e| ClassifierError::Format(e.to_string()))?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::Format(format!(
                "unsupported format_version {}",
                f.format_version
            )));
        }
        if f.dim == 0 {
            return Err(ClassifierError::Format("dim must be positive".into()));
        }
        validate_threshold(f.kind, f.threshold)
            .map_err(|_| ClassifierError::Format(format!("threshold {} invalid for {}", f.threshold, f.kind)))?;
        match f.kind {
            ClassifierKind::Logistic | ClassifierKind::LinearSvm => {
                if f.weights.len() != f.dim {
                    return Err(ClassifierError::Format(format!(
                        "{} weights for dim {}",
                        f.weights.len(),
                        f.dim
                    )));
                }
                if f.weights.iter().chain([&f.bias]).any(|w| !w.is_finite()) {
                    return Err(ClassifierError::Format("non-finite weight".into()));
                }
                if f.knn.is_some() {
                    return Err(ClassifierError::Format("linear model carries a knn index".into()));
                }
            }
            ClassifierKind::Knn => {
                let idx = f
                    .knn
                    .as_ref()
                    .ok_or_else(|| ClassifierError::Format("knn model without index".into()))?;
                if idx.k == 0 || idx.k % 2 == 0 || idx.k > idx.labels.len() {
                    return Err(ClassifierError::Format(format!("invalid k = {}", idx.k)));
                }
                if idx.rows.len() != idx.labels.len() * f.dim {
                    return Err(ClassifierError::Format("knn rows do not match labels x dim".into()));
                }
                if idx.labels.iter().any(|&l| l > 1) {
                    return Err(ClassifierError::Format("knn label outside {0,1}".into()));
                }
            }
        }
        Ok(ClassifierModel {
            kind: f.kind,
            dim: f.dim,
            weights: f.weights,
            bias: f.bias,
            threshold: f.threshold,
            knn: f.knn,
            metadata: f.metadata,
        })
    }
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_json())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    ClassifierModel::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{predict, train_knn, train_logistic, train_svm, TrainConfig};
    use crate::embedding::EmbeddingStore;

    fn data() -> (EmbeddingStore, Vec<u8>) {
        let s = EmbeddingStore::from_rows(
            3,
            vec![1.0, 0.0, 0.0, 0.8, 0.6, 0.0, -1.0, 0.0, 0.0, -0.6, 0.0, 0.8, 0.0, 1.0, 0.0],
        )
        .unwrap();
        (s, vec![1, 1, 0, 0, 1])
    }

    fn round_trip(m: &ClassifierModel) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(&back, m);
        for q in [[0.3f32, -0.2, 0.9], [0.0, 0.0, 1.0], [-0.7, 0.7, 0.1]] {
            let a = predict(m, &q).unwrap();
            let b = predict(&back, &q).unwrap();
            assert_eq!(a.score.to_bits(), b.score.to_bits());
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn logistic_round_trip() {
        let (s, y) = data();
        round_trip(&train_logistic(&s, &y, &TrainConfig::default()).unwrap());
    }

    #[test]
    fn svm_round_trip() {
        let (s, y) = data();
        round_trip(&train_svm(&s, &y, &TrainConfig::default()).unwrap());
    }

    #[test]
    fn knn_round_trip() {
        let (s, y) = data();
        round_trip(&train_knn(&s, &y, 3).unwrap());
    }

    #[test]
    fn rejects_malformed_files() {
        let (s, y) = data();
        let good = train_logistic(&s, &y, &TrainConfig::default()).unwrap().to_json();
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["format_version"] = 2.into();
        assert!(matches!(ClassifierModel::from_json(&v.to_string()), Err(ClassifierError::Format(_))));
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["weights"] = serde_json::json!([1.0]);
        assert!(matches!(ClassifierModel::from_json(&v.to_string()), Err(ClassifierError::Format(_))));
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["threshold"] = 1.5.into();
        assert!(matches!(ClassifierModel::from_json(&v.to_string()), Err(ClassifierError::Format(_))));
        assert!(matches!(ClassifierModel::from_json("{"), Err(ClassifierError::Format(_))));
    }
}
