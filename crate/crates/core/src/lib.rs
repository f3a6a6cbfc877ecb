//! Microaneurysm detection in retinal fundus images.
//!
//! The pipeline normalizes the green channel, builds gradient-weighted
//! images in which small round lesions show up as rings, extracts candidate
//! regions by iterative thresholding, describes each candidate with 29
//! intensity, shape and convergence-filter features, and scores it with a
//! boosted tree ensemble trained on undersampled data. The evaluation module
//! provides FROC and image-level ROC analysis, and `synth` renders
//! ground-truthed test scenes.
//!
//! Image stages are generic over the scalar type ([`Real`], `f32` or `f64`);
//! the aliases below fix the common choices.

pub mod candidates;
pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod field;
pub mod gradient;
pub mod lcf;
pub mod pipeline;
pub mod preprocess;
pub mod regions;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision image field.
pub type Field = field::ScalarField<f64>;
/// Single-precision image field.
pub type Field32 = field::ScalarField<f32>;
pub type GradientField = lcf::GradientField<f64>;
pub type FilterOutput = lcf::FilterOutput<f64>;
pub type ImageAnalysis = pipeline::ImageAnalysis<f64>;
