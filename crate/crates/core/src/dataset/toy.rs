//! Procedural wood-like images with planted defects.
//!
//! Backgrounds are warm stripes with per-pixel noise. Each defect class gets
//! a rendering rule (dark ellipse, thin slanted streak, ...), and its box is
//! the tight hull of the pixels actually painted, so masks and boxes agree
//! by construction. Defects never overlap.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{save_labeled, DatasetError, Manifest, ManifestRecord, Split};
use crate::codec::ClassAlphabet;
use crate::geometry::BoundingBox;
use crate::sample::LabeledSample;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DefectRule {
    Ellipse {
        color: [u8; 3],
        min_radius: f64,
        max_radius: f64,
    },
    Streak {
        color: [u8; 3],
        min_length: f64,
        max_length: f64,
        half_thickness: f64,
    },
}

impl DefectRule {
    /// Default rule for defect number `k` (0-based).
    pub fn default_for(k: usize) -> Self {
        match k % 4 {
            0 => DefectRule::Ellipse {
                color: [62, 36, 18],
                min_radius: 2.5,
                max_radius: 5.5,
            },
            1 => DefectRule::Streak {
                color: [28, 22, 18],
                min_length: 10.0,
                max_length: 18.0,
                half_thickness: 1.0,
            },
            2 => DefectRule::Ellipse {
                color: [235, 200, 70],
                min_radius: 2.0,
                max_radius: 4.0,
            },
            _ => DefectRule::Streak {
                color: [240, 235, 225],
                min_length: 8.0,
                max_length: 14.0,
                half_thickness: 0.8,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub base_rgb: [f64; 3],
    /// Per-image jitter of the base color (std dev, 8-bit units).
    pub color_jitter: f64,
    /// Relative brightness swing of the grain stripes.
    pub grain_amplitude: f64,
    /// Stripes per pixel along the row axis.
    pub grain_frequency: f64,
    /// Per-pixel noise std dev, 8-bit units.
    pub pixel_noise: f64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            base_rgb: [188.0, 142.0, 92.0],
            color_jitter: 10.0,
            grain_amplitude: 0.08,
            grain_frequency: 0.18,
            pixel_noise: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub height: usize,
    pub width: usize,
    pub num_defect_classes: usize,
    /// One rule per defect class; missing entries use [`DefectRule::default_for`].
    #[serde(default)]
    pub rules: Vec<DefectRule>,
    #[serde(default)]
    pub background: BackgroundSpec,
    /// Inclusive range for the number of defects drawn per image.
    pub boxes_per_image: (usize, usize),
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            num_defect_classes: 2,
            rules: Vec::new(),
            background: BackgroundSpec::default(),
            boxes_per_image: (1, 2),
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn alphabet(&self) -> ClassAlphabet {
        const NAMES: [&str; 5] = ["knot", "crack", "resin", "quartzite", "marrow"];
        let mut names = vec!["background".to_string()];
        names.extend((0..self.num_defect_classes).map(|k| match NAMES.get(k) {
            Some(n) => n.to_string(),
            None => format!("defect_{}", k + 1),
        }));
        ClassAlphabet::new(names).expect("validated spec has 1..=254 defect classes")
    }

    pub fn rule(&self, defect_index: usize) -> DefectRule {
        self.rules
            .get(defect_index)
            .copied()
            .unwrap_or_else(|| DefectRule::default_for(defect_index))
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::ToySpec(m.to_string()));
        if self.height < 8 || self.width < 8 {
            return bad("grid must be at least 8x8");
        }
        if self.num_defect_classes == 0 || self.num_defect_classes > 254 {
            return bad("num_defect_classes must be in 1..=254");
        }
        if self.boxes_per_image.0 > self.boxes_per_image.1 {
            return bad("boxes_per_image range is inverted");
        }
        Ok(())
    }
}

fn render_background(spec: &ToySpec, rng: &mut ChaCha8Rng) -> Array3<f64> {
    let bg = spec.background;
    let jitter = Normal::new(0.0, bg.color_jitter.max(1e-9)).unwrap();
    let noise = Normal::new(0.0, bg.pixel_noise.max(1e-9)).unwrap();
    let shift = jitter.sample(rng);
    let base = bg.base_rgb.map(|c| c + shift);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let warp_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let warp = rng.random_range(0.5..2.0);
    let (h, w) = (spec.height, spec.width);
    let mut img = Array3::<f64>::zeros((h, w, 3));
    for i in 0..h {
        for j in 0..w {
            let bend = warp * (j as f64 * 0.15 + warp_phase).sin();
            let grain = 1.0 + bg.grain_amplitude * ((i as f64 + bend) * bg.grain_frequency * std::f64::consts::TAU + phase).sin();
            let n = noise.sample(rng);
            for c in 0..3 {
                img[[i, j, c]] = base[c] * grain + n;
            }
        }
    }
    img
}

/// Pixels painted by `rule` around `(ci, cj)`, with a per-pixel shade in
/// `[0, 1]` (1 = core of the defect).
fn defect_pixels(rule: DefectRule, ci: f64, cj: f64, rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    match rule {
        DefectRule::Ellipse {
            min_radius, max_radius, ..
        } => {
            let ri = rng.random_range(min_radius..=max_radius);
            let rj = rng.random_range(min_radius..=max_radius);
            for i in 0..h {
                for j in 0..w {
                    let q = ((i as f64 - ci) / ri).powi(2) + ((j as f64 - cj) / rj).powi(2);
                    if q <= 1.0 {
                        out.push((i, j, 1.0 - 0.5 * q));
                    }
                }
            }
        }
        DefectRule::Streak {
            min_length,
            max_length,
            half_thickness,
            ..
        } => {
            let len = rng.random_range(min_length..=max_length);
            // slanted: 20..70 degrees either way
            let mut angle = rng.random_range(20f64..70.0).to_radians();
            if rng.random_bool(0.5) {
                angle = -angle;
            }
            let (di, dj) = (angle.sin() * len / 2.0, angle.cos() * len / 2.0);
            let (a, b) = ((ci - di, cj - dj), (ci + di, cj + dj));
            for i in 0..h {
                for j in 0..w {
                    let d = point_segment_distance((i as f64, j as f64), a, b);
                    if d <= half_thickness {
                        out.push((i, j, 1.0 - 0.4 * d / half_thickness.max(1e-9)));
                    }
                }
            }
        }
    }
    out
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (p.0 - (a.0 + t * vx), p.1 - (a.1 + t * vy));
    (dx * dx + dy * dy).sqrt()
}

fn hull(pixels: &[(usize, usize, f64)]) -> Option<(usize, usize, usize, usize)> {
    let mut it = pixels.iter();
    let &(i, j, _) = it.next()?;
    Some(it.fold((i, j, i, j), |(a, b, c, d), &(i, j, _)| (a.min(i), b.min(j), c.max(i), d.max(j))))
}

fn separated(a: &BoundingBox, b: &BoundingBox) -> bool {
    // at least one background pixel between boxes
    a.i_max + 1 < b.i_min || b.i_max + 1 < a.i_min || a.j_max + 1 < b.j_min || b.j_max + 1 < a.j_min
}

/// Sample `index` of the toy dataset described by `spec`.
pub fn toy_sample(spec: &ToySpec, index: u64) -> LabeledSample {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index));
    let (h, w) = (spec.height, spec.width);
    let mut img = render_background(spec, &mut rng);
    let mut mask = Array2::<u8>::from_elem((h, w), 1);
    let mut boxes: Vec<BoundingBox> = Vec::new();
    let (lo, hi) = spec.boxes_per_image;
    let wanted = rng.random_range(lo..=hi);
    for _ in 0..wanted {
        let k = rng.random_range(0..spec.num_defect_classes);
        let class_id = (k + 2) as u8;
        let rule = spec.rule(k);
        for _attempt in 0..30 {
            let ci = rng.random_range(2.0..(h as f64 - 3.0));
            let cj = rng.random_range(2.0..(w as f64 - 3.0));
            let px = defect_pixels(rule, ci, cj, &mut rng, h, w);
            let Some((i0, j0, i1, j1)) = hull(&px) else { continue };
            // keep defects off the image border so the whole shape is visible
            if i0 == 0 || j0 == 0 || i1 + 1 >= h || j1 + 1 >= w {
                continue;
            }
            let b = BoundingBox::new(class_id, i0, j0, i1, j1);
            if !boxes.iter().all(|o| separated(o, &b)) {
                continue;
            }
            let color = match rule {
                DefectRule::Ellipse { color, .. } | DefectRule::Streak { color, .. } => color,
            };
            for &(i, j, shade) in &px {
                for c in 0..3 {
                    let v = img[[i, j, c]];
                    img[[i, j, c]] = v + (color[c] as f64 - v) * (0.55 + 0.45 * shade);
                }
                mask[[i, j]] = class_id;
            }
            boxes.push(b);
            break;
        }
    }
    LabeledSample {
        image: img.mapv(|v| v.round().clamp(0.0, 255.0) as u8),
        mask,
        boxes,
    }
}

/// Writes `count` toy samples under `out_dir` and returns the manifest
/// (also saved as `out_dir/manifest.jsonl`). Splits are left unassigned.
pub fn generate_toy_dataset(spec: &ToySpec, count: usize, out_dir: &Path) -> Result<Manifest, DatasetError> {
    spec.validate()?;
    let alphabet = spec.alphabet();
    let mut manifest = Manifest::new(out_dir, alphabet.clone());
    for n in 0..count {
        let s = toy_sample(spec, n as u64);
        let stem = format!("{n:05}");
        save_labeled(&s, &out_dir.join("samples"), &stem, &alphabet)?;
        manifest.records.push(ManifestRecord {
            image: format!("samples/{stem}.png"),
            mask: format!("samples/{stem}_mask.png"),
            boxes: s.boxes,
            split: Split::Unassigned,
        });
    }
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_boxes_means_plain_background() {
        let spec = ToySpec {
            boxes_per_image: (0, 0),
            ..ToySpec::default()
        };
        for n in 0..5 {
            let s = toy_sample(&spec, n);
            assert!(s.boxes.is_empty());
            assert!(s.mask.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn boxes_are_tight_and_in_bounds() {
        let spec = ToySpec {
            seed: 11,
            ..ToySpec::default()
        };
        let mut total = 0;
        for n in 0..50 {
            let s = toy_sample(&spec, n);
            for b in &s.boxes {
                b.validate(0, 32, 32).unwrap();
                let inside = |i: usize, j: usize| s.mask[[i, j]] == b.class_id;
                assert!((b.j_min..=b.j_max).any(|j| inside(b.i_min, j)));
                assert!((b.j_min..=b.j_max).any(|j| inside(b.i_max, j)));
                assert!((b.i_min..=b.i_max).any(|i| inside(i, b.j_min)));
                assert!((b.i_min..=b.i_max).any(|i| inside(i, b.j_max)));
                total += 1;
            }
        }
        assert!(total > 50);
    }

    #[test]
    fn same_seed_same_sample() {
        let spec = ToySpec::default();
        assert_eq!(toy_sample(&spec, 3), toy_sample(&spec, 3));
        assert_ne!(toy_sample(&spec, 3).image, toy_sample(&spec, 4).image);
    }

    #[test]
    fn spec_validation() {
        let bad = ToySpec {
            boxes_per_image: (3, 1),
            ..ToySpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = ToySpec {
            num_defect_classes: 0,
            ..ToySpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
