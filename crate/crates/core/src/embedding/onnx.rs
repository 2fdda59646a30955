//! Backend running an exported vision-language checkpoint through tract.
//!
//! The export tooling writes a JSON sidecar next to the encoders:
//!
//! ```json
//! {
//!   "checkpoint": "openai/clip-vit-large-patch14",
//!   "dim": 768,
//!   "text_encoder": "text_encoder.onnx",
//!   "image_encoder": "image_encoder.onnx",
//!   "tokenizer": "tokenizer.json",
//!   "context_length": 77,
//!   "pad_token_id": 49407,
//!   "text_inputs": ["input_ids", "attention_mask"],
//!   "image": {"resize_shorter": 224, "crop": 224, "mean": [...], "std": [...]}
//! }
//! ```
//!
//! Relative paths resolve against the sidecar's directory. Either encoder may
//! be omitted; the backend then only advertises the other modality.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokenizers::{PaddingParams, PaddingStrategy, Tokenizer, TruncationParams};
use tract_onnx::prelude::*;

use super::{DecodedImage, EmbeddingBackend, EmbeddingError, ImagePreprocess, Modality, Result};
use crate::par::prelude::*;

fn default_context_length() -> usize {
    77
}

fn default_text_inputs() -> Vec<TextInput> {
    vec![TextInput::InputIds, TextInput::AttentionMask]
}

/// Which tokenizer output feeds each text-encoder input, in model order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextInput {
    InputIds,
    AttentionMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub checkpoint: String,
    pub dim: usize,
    #[serde(default)]
    pub text_encoder: Option<PathBuf>,
    #[serde(default)]
    pub image_encoder: Option<PathBuf>,
    #[serde(default)]
    pub tokenizer: Option<PathBuf>,
    #[serde(default = "default_context_length")]
    pub context_length: usize,
    #[serde(default)]
    pub pad_token_id: u32,
    #[serde(default = "default_text_inputs")]
    pub text_inputs: Vec<TextInput>,
    #[serde(default)]
    pub image: ImagePreprocess,
}

impl ModelSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| EmbeddingError::Format(format!("model sidecar {}: {e}", path.display())))
    }
}

type Plan = Arc<TypedRunnableModel>;

struct TextEncoder {
    plan: Plan,
    tokenizer: Tokenizer,
    context_length: usize,
    inputs: Vec<TextInput>,
}

struct ImageEncoder {
    plan: Plan,
    preprocess: ImagePreprocess,
}

pub struct OnnxBackend {
    name: String,
    dim: usize,
    modalities: Vec<Modality>,
    text: Option<TextEncoder>,
    image: Option<ImageEncoder>,
}

fn load_plan(path: &Path) -> Result<Plan> {
    tract_onnx::onnx()
        .model_for_path(path)
        .and_then(|m| m.into_optimized())
        .and_then(|m| m.into_runnable())
        .map_err(|e| EmbeddingError::BackendFailure {
            index: 0,
            message: format!("cannot load {}: {e}", path.display()),
        })
}

impl OnnxBackend {
    /// Loads every encoder named by the sidecar at `sidecar_path`.
    pub fn load(sidecar_path: &Path) -> Result<Self> {
        let sidecar = ModelSidecar::load(sidecar_path)?;
        let base = sidecar_path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        let text = match (&sidecar.text_encoder, &sidecar.tokenizer) {
            (Some(enc), Some(tok)) => {
                let mut tokenizer = Tokenizer::from_file(resolve(tok)).map_err(|e| {
                    EmbeddingError::Format(format!("tokenizer {}: {e}", tok.display()))
                })?;
                tokenizer.with_padding(Some(PaddingParams {
                    strategy: PaddingStrategy::Fixed(sidecar.context_length),
                    pad_id: sidecar.pad_token_id,
                    ..Default::default()
                }));
                tokenizer
                    .with_truncation(Some(TruncationParams {
                        max_length: sidecar.context_length,
                        ..Default::default()
                    }))
                    .map_err(|e| EmbeddingError::Format(format!("tokenizer truncation: {e}")))?;
                Some(TextEncoder {
                    plan: load_plan(&resolve(enc))?,
                    tokenizer,
                    context_length: sidecar.context_length,
                    inputs: sidecar.text_inputs.clone(),
                })
            }
            (Some(_), None) => {
                return Err(EmbeddingError::Format(
                    "sidecar names a text encoder but no tokenizer".into(),
                ))
            }
            _ => None,
        };
        let image = match &sidecar.image_encoder {
            Some(enc) => Some(ImageEncoder {
                plan: load_plan(&resolve(enc))?,
                preprocess: sidecar.image.clone(),
            }),
            None => None,
        };

        let mut modalities = Vec::new();
        if text.is_some() {
            modalities.push(Modality::Text);
        }
        if image.is_some() {
            modalities.push(Modality::Image);
        }
        if modalities.is_empty() {
            return Err(EmbeddingError::Format("sidecar names no encoders".into()));
        }
        Ok(Self {
            name: sidecar.checkpoint,
            dim: sidecar.dim,
            modalities,
            text,
            image,
        })
    }
}

fn rows_from_output(out: &TValue, batch: usize, dim: usize) -> std::result::Result<Vec<Vec<f32>>, (usize, String)> {
    let view = out.to_plain_array_view::<f32>().map_err(|e| (0, e.to_string()))?;
    let flat: Vec<f32> = view.iter().copied().collect();
    if flat.len() != batch * dim {
        return Err((
            0,
            format!("encoder output has {} values, expected {batch}x{dim}", flat.len()),
        ));
    }
    Ok(flat.chunks_exact(dim).map(<[f32]>::to_vec).collect())
}

impl EmbeddingBackend for OnnxBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    fn text_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f32>>, (usize, String)> {
        let enc = self
            .text
            .as_ref()
            .ok_or_else(|| (0, "no text encoder loaded".to_string()))?;
        let encodings = enc
            .tokenizer
            .encode_batch(texts.to_vec(), true)
            .map_err(|e| (0, format!("tokenizer: {e}")))?;
        let (b, l) = (texts.len(), enc.context_length);
        let mut ids = Vec::with_capacity(b * l);
        let mut mask = Vec::with_capacity(b * l);
        for e in &encodings {
            ids.extend(e.get_ids().iter().map(|&x| x as i64));
            mask.extend(e.get_attention_mask().iter().map(|&x| x as i64));
        }
        let mut inputs: TVec<TValue> = tvec!();
        for kind in &enc.inputs {
            let data = match kind {
                TextInput::InputIds => &ids,
                TextInput::AttentionMask => &mask,
            };
            let t = Tensor::from_shape(&[b, l], data).map_err(|e| (0, e.to_string()))?;
            inputs.push(t.into());
        }
        let out = enc.plan.run(inputs).map_err(|e| (0, format!("text encoder: {e}")))?;
        rows_from_output(&out[0], b, self.dim)
    }

    fn image_batch(&self, images: &[&DecodedImage]) -> std::result::Result<Vec<Vec<f32>>, (usize, String)> {
        let enc = self
            .image
            .as_ref()
            .ok_or_else(|| (0, "no image encoder loaded".to_string()))?;
        let tensors: Vec<std::result::Result<Vec<f32>, (usize, String)>> = images
            .par_iter()
            .enumerate()
            .map(|(i, im)| super::preprocess_image(im, &enc.preprocess).map_err(|e| (i, e.to_string())))
            .collect();
        let side = enc.preprocess.crop as usize;
        let mut pixels = Vec::with_capacity(images.len() * 3 * side * side);
        for t in tensors {
            pixels.extend(t?);
        }
        let t = Tensor::from_shape(&[images.len(), 3, side, side], &pixels).map_err(|e| (0, e.to_string()))?;
        let out = enc.plan.run(tvec!(t.into())).map_err(|e| (0, format!("image encoder: {e}")))?;
        rows_from_output(&out[0], images.len(), self.dim)
    }
}
