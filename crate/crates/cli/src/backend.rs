use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Result};
use modguard_core::embedding::{EmbeddingBackend, MockBackend, DEFAULT_DIM};

use crate::cli::BackendKind;

/// Builds the embedding backend: the hashing mock or the exported model
/// described by a sidecar file.
pub fn build_backend(kind: BackendKind, model_file: Option<&Path>, dim: Option<usize>) -> Result<Arc<dyn EmbeddingBackend>> {
    match kind {
        BackendKind::Mock => {
            let dim = dim.unwrap_or(DEFAULT_DIM);
            if dim == 0 {
                bail!("embedding: mock dim must be positive");
            }
            Ok(Arc::new(MockBackend::new(dim)))
        }
        BackendKind::Model => {
            let Some(path) = model_file else {
                bail!("embedding: --backend model needs --model-file <sidecar.json>");
            };
            load_model_backend(path)
        }
    }
}

#[cfg(feature = "onnx")]
fn load_model_backend(path: &Path) -> Result<Arc<dyn EmbeddingBackend>> {
    use anyhow::Context;
    let b = modguard_core::embedding::OnnxBackend::load(path)
        .with_context(|| format!("embedding: loading model from {}", path.display()))?;
    Ok(Arc::new(b))
}

#[cfg(not(feature = "onnx"))]
fn load_model_backend(_: &Path) -> Result<Arc<dyn EmbeddingBackend>> {
    bail!("embedding: this build has no model backend (enable the `onnx` feature)")
}
