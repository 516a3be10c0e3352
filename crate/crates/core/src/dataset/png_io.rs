//! PNG storage. Images are 8-bit RGB. Masks are 8-bit palette PNGs whose
//! pixel value is the zero-based class index (`class_id - 1`), so
//! background is stored as 0 and a valid mask never holds a value `>= C`.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use super::{DatasetError, Manifest, ManifestRecord};
use crate::codec::ClassAlphabet;
use crate::geometry::{validate_boxes, BoundingBox};
use crate::sample::{GeneratedSample, LabeledSample, Provenance, SampleMetrics};

/// Display colors per class index: background, then knot-blue, crack-red,
/// green, yellow, magenta, and a cycle of extra hues.
pub fn mask_palette(num_classes: usize) -> Vec<[u8; 3]> {
    const BASE: [[u8; 3]; 10] = [
        [0, 0, 0],
        [40, 90, 255],
        [230, 40, 40],
        [40, 200, 70],
        [240, 220, 40],
        [220, 40, 220],
        [40, 220, 220],
        [255, 140, 0],
        [150, 90, 40],
        [160, 160, 160],
    ];
    (0..num_classes).map(|k| BASE[k % BASE.len()]).collect()
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn encode_rgb_png(image: ArrayView3<u8>) -> Vec<u8> {
    let (h, w, c) = image.dim();
    assert_eq!(c, 3, "RGB image expected");
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("writing to a Vec cannot fail");
        let data: Vec<u8> = image.iter().copied().collect();
        writer.write_image_data(&data).expect("writing to a Vec cannot fail");
    }
    out
}

/// Encodes class ids `1..=C` as a palette PNG of zero-based indices.
pub fn encode_mask_png(mask: ArrayView2<u8>, alphabet: &ClassAlphabet) -> Vec<u8> {
    let (h, w) = mask.dim();
    let palette: Vec<u8> = mask_palette(alphabet.num_classes()).into_iter().flatten().collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette);
        let mut writer = enc.write_header().expect("writing to a Vec cannot fail");
        let data: Vec<u8> = mask.iter().map(|&c| c.saturating_sub(1)).collect();
        writer.write_image_data(&data).expect("writing to a Vec cannot fail");
    }
    out
}

struct RawPng {
    width: usize,
    height: usize,
    color: png::ColorType,
    data: Vec<u8>,
}

fn decode_raw(bytes: &[u8], path: &Path, expand: bool) -> Result<RawPng, DatasetError> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    if expand {
        dec.set_transformations(png::Transformations::normalize_to_color8());
    }
    let mut reader = dec.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut data = vec![0u8; size];
    let info = reader.next_frame(&mut data).map_err(|e| png_err(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(png_err(path, format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    data.truncate(info.buffer_size());
    Ok(RawPng {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        data,
    })
}

/// Decodes any 8-bit PNG to RGB (gray is replicated, alpha dropped).
pub fn decode_rgb_png(bytes: &[u8], path: &Path) -> Result<Array3<u8>, DatasetError> {
    let raw = decode_raw(bytes, path, true)?;
    let ch = match raw.color {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(png_err(path, format!("unsupported color type {other:?}"))),
    };
    let (h, w) = (raw.height, raw.width);
    Ok(Array3::from_shape_fn((h, w, 3), |(i, j, c)| {
        let px = &raw.data[(i * w + j) * ch..(i * w + j + 1) * ch];
        if ch < 3 {
            px[0]
        } else {
            px[c]
        }
    }))
}

/// Decodes a mask PNG (palette or 8-bit gray) into class ids `1..=C`.
pub fn decode_mask_png(bytes: &[u8], path: &Path, alphabet: &ClassAlphabet) -> Result<Array2<u8>, DatasetError> {
    let raw = decode_raw(bytes, path, false)?;
    if !matches!(raw.color, png::ColorType::Indexed | png::ColorType::Grayscale) {
        return Err(png_err(path, format!("mask must be single-channel, got {:?}", raw.color)));
    }
    let (h, w) = (raw.height, raw.width);
    let c = alphabet.num_classes();
    let mut mask = Array2::<u8>::zeros((h, w));
    for ((i, j), m) in mask.indexed_iter_mut() {
        let v = raw.data[i * w + j];
        if v as usize >= c {
            return Err(DatasetError::MaskValue {
                path: path.to_path_buf(),
                i,
                j,
                value: v,
                num_classes: c,
            });
        }
        *m = v + 1;
    }
    Ok(mask)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| DatasetError::io(path, e))
}

pub fn write_rgb(path: &Path, image: ArrayView3<u8>) -> Result<(), DatasetError> {
    write_bytes(path, &encode_rgb_png(image))
}

pub fn write_mask(path: &Path, mask: ArrayView2<u8>, alphabet: &ClassAlphabet) -> Result<(), DatasetError> {
    write_bytes(path, &encode_mask_png(mask, alphabet))
}

pub fn read_rgb(path: &Path) -> Result<Array3<u8>, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_rgb_png(&bytes, path)
}

pub fn read_mask(path: &Path, alphabet: &ClassAlphabet) -> Result<Array2<u8>, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_mask_png(&bytes, path, alphabet)
}

/// Reads the image and mask of manifest record `index` and validates its boxes.
pub fn load_sample(manifest: &Manifest, index: usize) -> Result<LabeledSample, DatasetError> {
    let record: &ManifestRecord = &manifest.records[index];
    let image_path = manifest.resolve(&record.image);
    let mask_path = manifest.resolve(&record.mask);
    let image = read_rgb(&image_path)?;
    let mask = read_mask(&mask_path, &manifest.alphabet)?;
    let (h, w) = mask.dim();
    if (image.shape()[0], image.shape()[1]) != (h, w) {
        return Err(DatasetError::SizeMismatch {
            path: image_path,
            image: (image.shape()[0], image.shape()[1]),
            mask: (h, w),
        });
    }
    validate_boxes(&record.boxes, h, w).map_err(|source| DatasetError::Boxes { record: index, source })?;
    Ok(LabeledSample {
        image,
        mask,
        boxes: record.boxes.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SavedPaths {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub boxes: PathBuf,
}

/// Sidecar written next to a generated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSidecar {
    pub boxes: Vec<BoundingBox>,
    pub provenance: Provenance,
    pub metrics: SampleMetrics,
}

/// Writes `<stem>.png`, `<stem>_mask.png` and `<stem>.json` into `dir`.
pub fn save_generated(sample: &GeneratedSample, dir: &Path, stem: &str, alphabet: &ClassAlphabet) -> Result<SavedPaths, DatasetError> {
    let paths = SavedPaths {
        image: dir.join(format!("{stem}.png")),
        mask: dir.join(format!("{stem}_mask.png")),
        boxes: dir.join(format!("{stem}.json")),
    };
    write_rgb(&paths.image, sample.image.view())?;
    write_mask(&paths.mask, sample.mask.view(), alphabet)?;
    let sidecar = GeneratedSidecar {
        boxes: sample.boxes.clone(),
        provenance: sample.provenance.clone(),
        metrics: sample.metrics,
    };
    write_bytes(&paths.boxes, serde_json::to_string_pretty(&sidecar).expect("sidecar serializes").as_bytes())?;
    Ok(paths)
}

/// Writes a labeled sample as `<stem>.png` / `<stem>_mask.png`.
pub fn save_labeled(sample: &LabeledSample, dir: &Path, stem: &str, alphabet: &ClassAlphabet) -> Result<(PathBuf, PathBuf), DatasetError> {
    let image = dir.join(format!("{stem}.png"));
    let mask = dir.join(format!("{stem}_mask.png"));
    write_rgb(&image, sample.image.view())?;
    write_mask(&mask, sample.mask.view(), alphabet)?;
    Ok((image, mask))
}

/// Reads a generated pair back from the paths [`save_generated`] returned.
pub fn load_generated(paths: &SavedPaths, alphabet: &ClassAlphabet) -> Result<GeneratedSample, DatasetError> {
    let image = read_rgb(&paths.image)?;
    let mask = read_mask(&paths.mask, alphabet)?;
    let text = fs::read_to_string(&paths.boxes).map_err(|e| DatasetError::io(&paths.boxes, e))?;
    let side: GeneratedSidecar = serde_json::from_str(&text).map_err(|source| DatasetError::MalformedJson {
        path: paths.boxes.clone(),
        line: source.line(),
        source,
    })?;
    Ok(GeneratedSample {
        image,
        mask,
        boxes: side.boxes,
        provenance: side.provenance,
        metrics: side.metrics,
    })
}
