use serde::{Deserialize, Serialize};

use super::{check_labels, corpus_hash, ClassifierError, ClassifierKind, ClassifierModel, Label, ModelMetadata, Result};
use crate::embedding::{dot, l2_norm, normalize, EmbeddingStore};

/// Stored unit-norm training instances for cosine k-NN voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnIndex {
    pub k: usize,
    pub labels: Vec<Label>,
    /// Row-major, `labels.len()` rows of the model's width.
    pub rows: Vec<f32>,
}

impl KnnIndex {
    fn dim(&self) -> usize {
        if self.labels.is_empty() {
            0
        } else {
            self.rows.len() / self.labels.len()
        }
    }

    /// Indices of the `k` most cosine-similar rows; equal similarity keeps
    /// the lower index.
    pub fn neighbours(&self, x: &[f32]) -> Vec<usize> {
        let dim = self.dim();
        let qn = l2_norm(x);
        let qn = if qn > 0.0 { qn } else { 1.0 };
        // Sorted descending by similarity, at most k entries.
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for (i, row) in self.rows.chunks_exact(dim).enumerate() {
            let sim = dot(row, x) / qn;
            if best.len() == self.k && sim <= best[self.k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(s, _)| s >= sim);
            best.insert(pos, (sim, i));
            best.truncate(self.k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of the `k` nearest neighbours labelled 1.
    pub fn vote_share(&self, x: &[f32]) -> f64 {
        let nb = self.neighbours(x);
        let pos = nb.iter().filter(|&&i| self.labels[i] == 1).count();
        pos as f64 / self.k as f64
    }
}

/// Stores the (re-normalised) training instances. `k` must be odd and at
/// most the number of rows.
pub fn train_knn(store: &EmbeddingStore, labels: &[Label], k: usize) -> Result<ClassifierModel> {
    check_labels(store.count(), labels)?;
    if k == 0 {
        return Err(ClassifierError::InvalidK("k must be at least 1".into()));
    }
    if k % 2 == 0 {
        return Err(ClassifierError::EvenK(k));
    }
    if k > store.count() {
        return Err(ClassifierError::InvalidK(format!(
            "k = {k} exceeds the {} stored instances",
            store.count()
        )));
    }
    let mut rows = Vec::with_capacity(store.data().len());
    for row in store.rows() {
        let v = normalize(row).map_err(|e| ClassifierError::InvalidK(format!("bad instance: {e}")))?;
        rows.extend_from_slice(v.as_slice());
    }
    Ok(ClassifierModel {
        kind: ClassifierKind::Knn,
        dim: store.dim(),
        weights: Vec::new(),
        bias: 0.0,
        threshold: ClassifierKind::Knn.default_threshold(),
        metadata: ModelMetadata {
            seed: None,
            cfg: None,
            train_corpus_hash: corpus_hash(store.dim(), &rows, labels),
            updates: 0,
        },
        knn: Some(KnnIndex { k, labels: labels.to_vec(), rows }),
    })
}
