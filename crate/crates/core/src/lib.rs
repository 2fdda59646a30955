//! Two-stage multimodal harmful-content detection.
//!
//! Stage one maps cleaned text and images into one shared embedding space
//! ([`embedding`]). Stage two trains cheap linear and instance-based
//! classifiers on those frozen vectors ([`classifiers`]), which then apply
//! unchanged to either modality. Around that core sit text cleaning,
//! evaluation, 2D/3D projection for cluster inspection, paraphrase
//! augmentation through an external language model, and corpus tooling.

pub mod augmentation;
pub mod classifiers;
pub mod corpus;
pub mod embedding;
pub mod metrics;
pub mod par;
pub mod projection;
pub mod textprep;
