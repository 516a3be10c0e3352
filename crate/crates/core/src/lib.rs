//! Core of boxforge: turning bounding-box layouts into conditioning maps,
//! analog-bit class coding, the joint image/mask diffusion math, layout
//! alignment metrics, and dataset I/O.

pub mod codec;
pub mod dataset;
pub mod diffusion;
pub mod geometry;
pub mod metrics;
pub mod sample;
pub mod seed;

pub use codec::{ClassAlphabet, CodecError};
pub use geometry::{BoundingBox, ConditioningMaps, GeometryError, MapOptions};
pub use sample::{GeneratedSample, LabeledSample, Provenance, SampleMetrics};
