use boxforge_core::dataset::{toy_sample, ToySpec};
use boxforge_core::diffusion::{to_u8, NoiseSchedule};
use boxforge_core::geometry::{compute_maps_fast, normalize_distance, MapOptions};
use boxforge_core::metrics::{AlignmentReport, MatchMode};
use boxforge_core::seed::splitmix64;
use boxforge_core::{BoundingBox, ClassAlphabet};
use ndarray::ArrayView2;

use crate::ToySample;

fn parse_boxes(json: &str) -> Result<Vec<BoundingBox>, String> {
    serde_json::from_str(json).map_err(|e| format!("boxes: {e}"))
}

pub fn distance_map(boxes_json: &str, height: usize, width: usize) -> Result<Vec<f32>, String> {
    let maps = compute_maps_fast(&parse_boxes(boxes_json)?, height, width, MapOptions::default()).map_err(|e| e.to_string())?;
    Ok(normalize_distance(&maps).iter().copied().collect())
}

pub fn class_map(boxes_json: &str, height: usize, width: usize) -> Result<Vec<u8>, String> {
    let maps = compute_maps_fast(&parse_boxes(boxes_json)?, height, width, MapOptions::default()).map_err(|e| e.to_string())?;
    Ok(maps.class_map.iter().copied().collect())
}

pub fn alpha_bar_curve(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Vec<f64>, String> {
    let s = NoiseSchedule::linear(num_steps, beta_start, beta_end).map_err(|e| e.to_string())?;
    Ok(s.alphas_cumprod().to_vec())
}

pub fn toy(seed: u64, height: usize, width: usize) -> Result<ToySample, String> {
    let spec = ToySpec {
        height,
        width,
        seed,
        ..ToySpec::default()
    };
    spec.validate().map_err(|e| e.to_string())?;
    let s = toy_sample(&spec, 0);
    let rgba = s.image.outer_iter().flat_map(|row| row.outer_iter().flat_map(|px| [px[0], px[1], px[2], 255]).collect::<Vec<_>>()).collect();
    let boxes = serde_json::to_string(&s.boxes).expect("boxes serialize");
    Ok(ToySample::new(rgba, s.mask.iter().copied().collect(), boxes))
}

/// Standard normal draw from a counter-based hash (Box-Muller), so each
/// pixel's noise is fixed by `(seed, index)`.
fn gaussian(seed: u64, index: u64) -> f64 {
    let a = splitmix64(seed ^ splitmix64(2 * index));
    let b = splitmix64(seed ^ splitmix64(2 * index + 1));
    let u1 = ((a >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn forward_noise(rgba: &[u8], t: usize, num_steps: usize, beta_start: f64, beta_end: f64, seed: u64) -> Result<Vec<u8>, String> {
    if rgba.len() % 4 != 0 {
        return Err(format!("RGBA buffer length {} is not a multiple of 4", rgba.len()));
    }
    let s = NoiseSchedule::linear(num_steps, beta_start, beta_end).map_err(|e| e.to_string())?;
    if t == 0 {
        return Ok(rgba.to_vec());
    }
    s.check_step(t).map_err(|e| e.to_string())?;
    let (a, b) = s.marginal_scales(t);
    Ok(rgba
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if k % 4 == 3 {
                v
            } else {
                let x = v as f64 / 127.5 - 1.0;
                to_u8((a * x + b * gaussian(seed, k as u64)) as f32)
            }
        })
        .collect())
}

pub fn alignment(mask: &[u8], height: usize, width: usize, boxes_json: &str, num_classes: usize) -> Result<String, String> {
    let alphabet = ClassAlphabet::with_classes(num_classes).map_err(|e| e.to_string())?;
    let view = ArrayView2::from_shape((height, width), mask).map_err(|e| format!("mask: {e}"))?;
    if let Some(v) = mask.iter().find(|&&v| !alphabet.contains(v)) {
        return Err(format!("mask value {v} is not a class id in 1..={num_classes}"));
    }
    let boxes = parse_boxes(boxes_json)?;
    boxforge_core::geometry::validate_boxes(&boxes, height, width).map_err(|e| e.to_string())?;
    let r = AlignmentReport::for_mask(view, &boxes, &alphabet, MatchMode::SameClass);
    Ok(serde_json::json!({
        "sae": r.sae_micro,
        "ebr": r.ebr_average,
        "generated_pixels": r.generated_pixels,
        "outside_pixels": r.outside_pixels,
        "total_boxes": r.total_boxes,
        "missed_boxes": r.missed_boxes,
    })
    .to_string())
}
