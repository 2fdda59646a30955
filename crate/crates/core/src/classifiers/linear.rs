use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_labels, corpus_hash, ClassifierError, ClassifierKind, ClassifierModel, Label,
    ModelMetadata, Result, TrainConfig,
};
use crate::embedding::EmbeddingStore;

/// Replay sample size as a multiple of the number of new examples.
pub const REPLAY_RATIO: usize = 4;

pub(crate) fn margin(weights: &[f64], bias: f64, x: &[f32]) -> f64 {
    let mut z = bias;
    for (w, &xi) in weights.iter().zip(x) {
        z += w * xi as f64;
    }
    z
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Per-example loss and its derivative with respect to the margin.
fn pointwise(kind: ClassifierKind, z: f64, y: Label) -> (f64, f64) {
    match kind {
        ClassifierKind::Logistic => {
            let y = y as f64;
            (softplus(z) - y * z, super::sigmoid(z) - y)
        }
        ClassifierKind::LinearSvm => {
            let s = if y == 1 { 1.0 } else { -1.0 };
            let m = s * z;
            if m < 1.0 {
                (1.0 - m, -s)
            } else {
                (0.0, 0.0)
            }
        }
        ClassifierKind::Knn => unreachable!("k-NN has no loss"),
    }
}

/// Training rows borrowed as a flat row-major slice.
struct Data<'a> {
    dim: usize,
    x: &'a [f32],
    y: &'a [Label],
    weight: Vec<f64>,
}

impl<'a> Data<'a> {
    fn new(dim: usize, x: &'a [f32], y: &'a [Label], class_weighting: bool) -> Self {
        let n = y.len();
        let weight = if class_weighting {
            let pos = y.iter().filter(|&&l| l == 1).count();
            let per_class = [n as f64 / (2.0 * (n - pos).max(1) as f64), n as f64 / (2.0 * pos.max(1) as f64)];
            y.iter().map(|&l| per_class[l as usize]).collect()
        } else {
            vec![1.0; n]
        };
        Self { dim, x, y, weight }
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.y.len()
    }

    /// Mean weighted loss over `idx` plus `l2/2 * ||w||^2`, and its gradient.
    fn loss_grad(
        &self,
        kind: ClassifierKind,
        w: &[f64],
        b: f64,
        l2: f64,
        idx: impl ExactSizeIterator<Item = usize>,
        grad_w: &mut [f64],
    ) -> (f64, f64) {
        let m = idx.len() as f64;
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut grad_b = 0.0;
        for i in idx {
            let x = self.row(i);
            let (l, dz) = pointwise(kind, margin(w, b, x), self.y[i]);
            let c = self.weight[i];
            loss += c * l;
            if dz != 0.0 {
                let s = c * dz;
                for (g, &xi) in grad_w.iter_mut().zip(x) {
                    *g += s * xi as f64;
                }
                grad_b += s;
            }
        }
        let mut reg = 0.0;
        for (g, &wi) in grad_w.iter_mut().zip(w) {
            *g = *g / m + l2 * wi;
            reg += wi * wi;
        }
        (loss / m + 0.5 * l2 * reg, grad_b / m)
    }

    fn full_loss(&self, kind: ClassifierKind, w: &[f64], b: f64, l2: f64, scratch: &mut [f64]) -> f64 {
        self.loss_grad(kind, w, b, l2, 0..self.len(), scratch).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: f64,
}

/// Full-batch objective and (sub)gradient at `(weights, bias)`, with unit
/// example weights: mean log-loss (logistic) or mean hinge loss (SVM) plus
/// `l2/2 * ||w||^2`. The bias is not regularised.
pub fn loss_and_gradient(
    kind: ClassifierKind,
    weights: &[f64],
    bias: f64,
    store: &EmbeddingStore,
    labels: &[Label],
    l2: f64,
) -> Result<LossGradient> {
    if kind == ClassifierKind::Knn {
        return Err(ClassifierError::UnsupportedKind(kind));
    }
    if weights.len() != store.dim() {
        return Err(ClassifierError::DimMismatch { expected: store.dim(), actual: weights.len() });
    }
    check_labels(store.count(), labels)?;
    if store.is_empty() {
        return Err(ClassifierError::InvalidConfig("empty data".into()));
    }
    let data = Data::new(store.dim(), store.data(), labels, false);
    let mut grad = vec![0.0; store.dim()];
    let (loss, grad_bias) = data.loss_grad(kind, weights, bias, l2, 0..data.len(), &mut grad);
    Ok(LossGradient { loss, grad_weights: grad, grad_bias })
}

/// Seeded mini-batch descent from `(w, b)`. Returns the full-data loss before
/// the first epoch and after each epoch.
fn descend(
    kind: ClassifierKind,
    data: &Data<'_>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    w: &mut [f64],
    b: &mut f64,
) -> Vec<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; data.dim];
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    history.push(data.full_loss(kind, w, *b, cfg.l2, &mut grad));
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch) {
            let (_, gb) = data.loss_grad(kind, w, *b, cfg.l2, batch.iter().copied(), &mut grad);
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= cfg.learning_rate * g;
            }
            *b -= cfg.learning_rate * gb;
        }
        history.push(data.full_loss(kind, w, *b, cfg.l2, &mut grad));
    }
    history
}

fn check_training_set(store: &EmbeddingStore, labels: &[Label]) -> Result<()> {
    check_labels(store.count(), labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if store.count() < 2 || pos == 0 || pos == labels.len() {
        return Err(ClassifierError::DegenerateData);
    }
    Ok(())
}

/// Trains a logistic or SVM model from zero weights and also returns the
/// per-epoch training loss (index 0 is the initial loss).
pub fn train_linear_with_history(
    kind: ClassifierKind,
    store: &EmbeddingStore,
    labels: &[Label],
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, Vec<f64>)> {
    if kind == ClassifierKind::Knn {
        return Err(ClassifierError::UnsupportedKind(kind));
    }
    cfg.validate()?;
    check_training_set(store, labels)?;
    let data = Data::new(store.dim(), store.data(), labels, cfg.class_weighting);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; store.dim()];
    let mut b = 0.0;
    let history = descend(kind, &data, cfg, &mut rng, &mut w, &mut b);
    let model = ClassifierModel {
        kind,
        dim: store.dim(),
        weights: w,
        bias: b,
        threshold: kind.default_threshold(),
        knn: None,
        metadata: ModelMetadata {
            seed: Some(cfg.seed),
            cfg: Some(cfg.clone()),
            train_corpus_hash: corpus_hash(store.dim(), store.data(), labels),
            updates: 0,
        },
    };
    Ok((model, history))
}

/// L2-regularised logistic regression by mini-batch gradient descent.
pub fn train_logistic(store: &EmbeddingStore, labels: &[Label], cfg: &TrainConfig) -> Result<ClassifierModel> {
    train_linear_with_history(ClassifierKind::Logistic, store, labels, cfg).map(|(m, _)| m)
}

/// L2-regularised linear SVM (hinge loss, labels mapped to +-1) by
/// mini-batch subgradient descent.
pub fn train_svm(store: &EmbeddingStore, labels: &[Label], cfg: &TrainConfig) -> Result<ClassifierModel> {
    train_linear_with_history(ClassifierKind::LinearSvm, store, labels, cfg).map(|(m, _)| m)
}

/// Uniform sample of `size` indices from `0..n` (Algorithm R), sorted.
fn reservoir(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut res: Vec<usize> = (0..size).collect();
    for i in size..n {
        let j = rng.random_range(0..=i);
        if j < size {
            res[j] = i;
        }
    }
    res.sort_unstable();
    res
}

/// Warm-started fine-tuning of a linear model on new examples mixed with a
/// seeded replay sample of `REPLAY_RATIO * new.count()` old examples.
///
/// Returns a new model; the input model is untouched. With no new examples
/// or zero epochs the result equals the input.
pub fn update_incremental(
    model: &ClassifierModel,
    new: &EmbeddingStore,
    new_labels: &[Label],
    replay: &EmbeddingStore,
    replay_labels: &[Label],
    cfg: &TrainConfig,
) -> Result<ClassifierModel> {
    if model.kind == ClassifierKind::Knn {
        return Err(ClassifierError::UnsupportedKind(model.kind));
    }
    for s in [new, replay] {
        if s.dim() != model.dim {
            return Err(ClassifierError::DimMismatch { expected: model.dim, actual: s.dim() });
        }
    }
    check_labels(new.count(), new_labels)?;
    check_labels(replay.count(), replay_labels)?;
    if new.is_empty() || cfg.epochs == 0 {
        return Ok(model.clone());
    }
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picked = reservoir(replay.count(), REPLAY_RATIO * new.count(), &mut rng);
    let mut x = new.data().to_vec();
    let mut y = new_labels.to_vec();
    for &i in &picked {
        x.extend_from_slice(replay.row(i));
        y.push(replay_labels[i]);
    }
    let data = Data::new(model.dim, &x, &y, cfg.class_weighting);
    let mut w = model.weights.clone();
    let mut b = model.bias;
    descend(model.kind, &data, cfg, &mut rng, &mut w, &mut b);

    Ok(ClassifierModel {
        weights: w,
        bias: b,
        metadata: ModelMetadata {
            seed: Some(cfg.seed),
            cfg: Some(cfg.clone()),
            train_corpus_hash: corpus_hash(model.dim, &x, &y),
            updates: model.metadata.updates + 1,
        },
        ..model.clone()
    })
}
