//! Social-perception bias auditing for vision-language embedding spaces.
//!
//! The crate works on pre-computed image and text embeddings plus attribute
//! manifests. It measures template-averaged cosine similarity between face
//! images and social-perception prompts, corrects for the per-image affinity
//! to a neutral "person" prompt, and runs the attribute-variation bootstrap,
//! the fairness metric battery and the supporting statistics on top.

pub mod analysis;
pub mod config;
pub mod datamodel;
pub mod embedio;
pub mod error;
pub mod fairmetrics;
pub mod imagestats;
pub mod pipeline;
pub mod simcore;
pub mod stats;
pub mod synthetic;
pub mod variation;

pub use error::{Error, Result};
