//! Stage one: mapping cleaned text and decoded images into one shared,
//! L2-normalised vector space.

mod image_prep;
mod mock;
#[cfg(feature = "onnx")]
mod onnx;
mod store;

use std::fmt;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::CleanText;

pub use image_prep::{decode_image, preprocess_image, ImagePreprocess};
pub use mock::MockBackend;
#[cfg(feature = "onnx")]
pub use onnx::{ModelSidecar, OnnxBackend};
pub use store::{
    meta_path, read_meta, read_store, write_store, EmbeddingStore, MetaRow, STORE_MAGIC,
    STORE_VERSION,
};

/// Default output width, matching the ViT-L/14 vision-language checkpoint.
pub const DEFAULT_DIM: usize = 768;
pub const DEFAULT_BATCH_SIZE: usize = 32;
/// Tolerance on `||v|| - 1` for anything claiming to be unit-norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// Decoded RGB image ready for a backend.
pub type DecodedImage = RgbImage;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot normalise an all-zero vector")]
    ZeroVector,
    #[error("vector contains NaN or infinite values")]
    NonFinite,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("backend `{backend}` does not support {modality} inputs")]
    UnsupportedModality { backend: String, modality: Modality },
    #[error("backend failure at item {index}: {message}")]
    BackendFailure { index: usize, message: String },
    #[error("image decode error: {0}")]
    ImageDecode(String),
    #[error("store format error: {0}")]
    Format(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("duplicate id `{0}` in store")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Text => f.write_str("text"),
            Modality::Image => f.write_str("image"),
        }
    }
}

/// Unit-norm, finite vector in the shared text/image space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity; a plain dot product since both sides are unit-norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f32]) -> Result<EmbeddingVector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let norm = l2_norm(v);
    if norm == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(EmbeddingVector(
        v.iter().map(|&x| (x as f64 / norm) as f32).collect(),
    ))
}

/// A model that maps inputs of one or both modalities into a fixed-width space.
///
/// Implementations return raw (unnormalised) rows; [`embed_texts`] and
/// [`embed_images`] handle validation, batching and normalisation. Backends
/// must be deterministic: identical inputs give identical rows.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn modalities(&self) -> &[Modality];

    /// Embeds one batch of texts. `Err((i, msg))` names the failing item
    /// relative to the batch.
    fn text_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f32>>, (usize, String)>;

    fn image_batch(
        &self,
        images: &[&DecodedImage],
    ) -> std::result::Result<Vec<Vec<f32>>, (usize, String)>;

    fn supports(&self, modality: Modality) -> bool {
        self.modalities().contains(&modality)
    }
}

fn finish_batch(
    backend: &dyn EmbeddingBackend,
    offset: usize,
    expected: usize,
    raw: std::result::Result<Vec<Vec<f32>>, (usize, String)>,
    out: &mut Vec<EmbeddingVector>,
) -> Result<()> {
    let rows = raw.map_err(|(i, message)| EmbeddingError::BackendFailure {
        index: offset + i,
        message,
    })?;
    if rows.len() != expected {
        return Err(EmbeddingError::BackendFailure {
            index: offset,
            message: format!("backend returned {} rows for a batch of {expected}", rows.len()),
        });
    }
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != backend.dim() {
            return Err(EmbeddingError::BackendFailure {
                index: offset + i,
                message: format!("row width {} != backend dim {}", row.len(), backend.dim()),
            });
        }
        let v = normalize(&row).map_err(|e| EmbeddingError::BackendFailure {
            index: offset + i,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(())
}

/// Embeds cleaned texts in batches of `batch_size`, preserving order.
pub fn embed_texts(
    backend: &dyn EmbeddingBackend,
    texts: &[CleanText],
    batch_size: usize,
) -> Result<Vec<EmbeddingVector>> {
    if !backend.supports(Modality::Text) {
        return Err(EmbeddingError::UnsupportedModality {
            backend: backend.name().to_string(),
            modality: Modality::Text,
        });
    }
    if texts.is_empty() {
        return Err(EmbeddingError::InvalidInput("empty text list".into()));
    }
    let batch_size = batch_size.max(1);
    let mut out = Vec::with_capacity(texts.len());
    for (b, chunk) in texts.chunks(batch_size).enumerate() {
        let refs: Vec<&str> = chunk.iter().map(CleanText::as_str).collect();
        let raw = backend.text_batch(&refs);
        finish_batch(backend, b * batch_size, chunk.len(), raw, &mut out)?;
    }
    Ok(out)
}

/// Embeds decoded images in batches of `batch_size`, preserving order.
pub fn embed_images(
    backend: &dyn EmbeddingBackend,
    images: &[DecodedImage],
    batch_size: usize,
) -> Result<Vec<EmbeddingVector>> {
    if !backend.supports(Modality::Image) {
        return Err(EmbeddingError::UnsupportedModality {
            backend: backend.name().to_string(),
            modality: Modality::Image,
        });
    }
    if images.is_empty() {
        return Err(EmbeddingError::InvalidInput("empty image list".into()));
    }
    let batch_size = batch_size.max(1);
    let mut out = Vec::with_capacity(images.len());
    for (b, chunk) in images.chunks(batch_size).enumerate() {
        let refs: Vec<&DecodedImage> = chunk.iter().collect();
        let raw = backend.image_batch(&refs);
        finish_batch(backend, b * batch_size, chunk.len(), raw, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::clean_text;

    #[test]
    fn normalize_known_vectors() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.6, 0.8]);
        let e = normalize(&[0.0, -1.0, 0.0]).unwrap();
        assert_eq!(e.as_slice(), &[0.0, -1.0, 0.0]);
        let again = normalize(v.as_slice()).unwrap();
        for (a, b) in again.as_slice().iter().zip(v.as_slice()) {
            assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert!(matches!(normalize(&[0.0, 0.0]), Err(EmbeddingError::ZeroVector)));
        assert!(matches!(normalize(&[1.0, f32::NAN]), Err(EmbeddingError::NonFinite)));
        assert!(matches!(normalize(&[f32::INFINITY]), Err(EmbeddingError::NonFinite)));
    }

    struct Failing;

    impl EmbeddingBackend for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn dim(&self) -> usize {
            4
        }
        fn modalities(&self) -> &[Modality] {
            &[Modality::Text]
        }
        fn text_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f32>>, (usize, String)> {
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if *t == "boom" {
                        Err((i, "inference error".to_string()))
                    } else {
                        Ok(vec![1.0, 0.0, 0.0, 0.0])
                    }
                })
                .collect()
        }
        fn image_batch(&self, _: &[&DecodedImage]) -> std::result::Result<Vec<Vec<f32>>, (usize, String)> {
            unreachable!()
        }
    }

    #[test]
    fn backend_failure_reports_global_index() {
        let texts: Vec<CleanText> = ["a", "b", "c", "boom", "d"].iter().map(|t| clean_text(t)).collect();
        let err = embed_texts(&Failing, &texts, 2).unwrap_err();
        match err {
            EmbeddingError::BackendFailure { index, .. } => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn modality_and_empty_input_checks() {
        let img = DecodedImage::new(2, 2);
        assert!(matches!(
            embed_images(&Failing, &[img], 8),
            Err(EmbeddingError::UnsupportedModality { .. })
        ));
        assert!(matches!(embed_texts(&Failing, &[], 8), Err(EmbeddingError::InvalidInput(_))));
        let mock = MockBackend::new(8);
        assert!(matches!(embed_images(&mock, &[], 8), Err(EmbeddingError::InvalidInput(_))));
    }
}
