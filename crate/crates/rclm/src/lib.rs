//! Occlusion-tolerant face alignment built from an ensemble of constrained
//! local models.
//!
//! A face is fit by every pose/expression mode of the ensemble: each mode
//! runs local landmark detectors over a normalized window, generates shape
//! hypotheses from candidate pairs, and completes partially observed shapes
//! through its point distribution model. The mode whose completed shape
//! explains the most detections at the lowest residual wins, which is what
//! makes the pipeline degrade gracefully under occlusion — covered landmarks
//! simply drop out of the consensus instead of dragging the shape along.
//!
//! The crate splits into:
//! - [`shape`]: statistical shape models, contour densification, alignment
//!   of training sets, and exemplar clustering;
//! - [`appearance`]: census descriptors, boosted detectors, response maps,
//!   and candidate extraction;
//! - [`fitter`]: hypothesis sampling, robust consensus, shape completion,
//!   mode selection, and refinement;
//! - [`io`]: model container files, annotation formats, and result records;
//! - [`eval`]: metrics, synthetic benchmark generation, and ablation runs.

pub mod appearance;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod fitter;
pub mod geometry;
pub mod img;
pub mod io;
pub mod scheme;
pub mod shape;

pub use config::{
    BoostConfig, CrossScale, DescriptorConfig, FitConfig, SamplingStrategy, SearchConfig,
    ShapeTrainConfig,
};
pub use error::{Error, Result};
pub use geometry::{FaceBox, Similarity, Vec2};
pub use scheme::{LandmarkKind, LandmarkScheme};
pub use shape::{ModeId, ModelEnsemble, Shape};
