//! Analysis engine for particle micrographs.
//!
//! The modules compose into one pipeline: a flow field (from a network or
//! from [`flowgen`]) is integrated by [`dynamics`] into an instance label
//! map, [`scalebar`] recovers the physical calibration from the image,
//! [`metrology`] measures every particle and [`report`] renders the result.
//! [`evalkit`] scores segmentations and scale-bar readings, and [`synthgen`]
//! produces seeded ground truth for all of it.

pub mod api;
pub mod corrections;
pub mod dynamics;
pub mod evalkit;
pub mod flowgen;
pub mod imagecore;
pub mod metrology;
pub mod pipeline;
pub mod report;
pub mod scalebar;
pub mod synthgen;

pub use imagecore::{FlowField, LabelMap, Mask, Raster8, RunLengthMask};
