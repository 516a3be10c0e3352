//! Dataset manifests, PNG storage, the split protocol and the procedural
//! toy-defect generator.

mod manifest;
mod png_io;
mod split;
pub mod toy;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{classes_path_for, Manifest, ManifestRecord, Split};
pub use png_io::{
    decode_mask_png, decode_rgb_png, encode_mask_png, encode_rgb_png, load_generated, load_sample, mask_palette,
    read_mask, read_rgb, save_generated, save_labeled, write_mask, write_rgb, GeneratedSidecar, SavedPaths,
};
pub use split::{split_counts, split_dataset, SplitFractions};
pub use toy::{generate_toy_dataset, toy_sample, BackgroundSpec, DefectRule, ToySpec};

use crate::codec::CodecError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {} line {line}: {source}", path.display())]
    MalformedJson {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: mask pixel ({i}, {j}) has value {value}, must be < {num_classes}", path.display())]
    MaskValue {
        path: PathBuf,
        i: usize,
        j: usize,
        value: u8,
        num_classes: usize,
    },
    #[error("{}: {message}", path.display())]
    Png { path: PathBuf, message: String },
    #[error("{}: image is {image:?} but mask is {mask:?}", path.display())]
    SizeMismatch {
        path: PathBuf,
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error("record {record}: {source}")]
    Boxes {
        record: usize,
        #[source]
        source: GeometryError,
    },
    #[error("record {record}: box {index} has class {class_id}, not a defect class of this alphabet")]
    BoxClass { record: usize, index: usize, class_id: u8 },
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    Fractions([f64; 3]),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid toy spec: {0}")]
    ToySpec(String),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile { path }
        } else {
            DatasetError::Io { path, source }
        }
    }
}
