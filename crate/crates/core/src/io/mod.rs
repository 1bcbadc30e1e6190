//! File formats: TCK streamlines, simple volumes, scan metadata.

pub mod metadata;
pub mod tck;
pub mod volume;
