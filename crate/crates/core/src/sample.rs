use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

/// A real (or toy) training sample: 8-bit RGB image (`H x W x 3`), class
/// mask with ids in `1..=C`, and the box annotations in authored order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Array3<u8>,
    pub mask: Array2<u8>,
    pub boxes: Vec<BoundingBox>,
}

impl LabeledSample {
    pub fn height(&self) -> usize {
        self.mask.nrows()
    }

    pub fn width(&self) -> usize {
        self.mask.ncols()
    }
}

/// Where a generated sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Per-sample alignment values (percentages, `None` when undefined).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sae: Option<f64>,
    pub ebr: Option<f64>,
}

/// Decoded output of the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub image: Array3<u8>,
    pub mask: Array2<u8>,
    pub boxes: Vec<BoundingBox>,
    pub provenance: Provenance,
    pub metrics: SampleMetrics,
}

impl GeneratedSample {
    pub fn into_labeled(self) -> LabeledSample {
        LabeledSample {
            image: self.image,
            mask: self.mask,
            boxes: self.boxes,
        }
    }
}
