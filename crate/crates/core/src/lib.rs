//! Cohort saliency analysis for DTI fiber-tract data.
//!
//! Streamlines and scalar volumes are bundled by atlas region and reduced to
//! per-region feature matrices. A repeated, subject-grouped cross-validation
//! then ranks features by tree importance and regions by the accuracy of a
//! linear SVM trained on each fold's top features.

pub mod atlas;
pub mod bundle;
pub mod cohort;
pub mod features;
pub mod geometry;
pub mod io;
pub mod matrix;
pub mod ml;
pub mod seed;
pub mod dataset;
pub mod synth;
pub mod analytics;
pub mod fibers;
#[cfg(feature = "server")]
pub mod service;
