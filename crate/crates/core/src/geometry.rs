//! Box-aware conditioning maps.
//!
//! For every pixel we compute a signed Euclidean distance to the nearest
//! bounding-box boundary point (positive inside a box, negative outside) and
//! a class map naming the box that owns that boundary point. Two
//! implementations are provided: [`compute_maps_reference`] walks every
//! rasterized boundary pixel of every box, [`compute_maps_fast`] uses the
//! closed-form point-to-rectangle distance. They agree exactly on integer
//! grids.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("box {index}: class id must be >= 1, got {class_id}")]
    BackgroundClass { index: usize, class_id: u8 },
    #[error("box {index}: corners are inverted ({i_min},{j_min})-({i_max},{j_max})")]
    InvertedCorners {
        index: usize,
        i_min: usize,
        j_min: usize,
        i_max: usize,
        j_max: usize,
    },
    #[error("box {index}: ({i_max},{j_max}) lies outside a {height}x{width} grid")]
    OutOfBounds {
        index: usize,
        i_max: usize,
        j_max: usize,
        height: usize,
        width: usize,
    },
    #[error("grid must be non-empty, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },
}

/// One conditioning box. Corners are inclusive; `i` is the row, `j` the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    #[serde(rename = "class")]
    pub class_id: u8,
    pub i_min: usize,
    pub j_min: usize,
    pub i_max: usize,
    pub j_max: usize,
}

impl BoundingBox {
    pub fn new(class_id: u8, i_min: usize, j_min: usize, i_max: usize, j_max: usize) -> Self {
        Self {
            class_id,
            i_min,
            j_min,
            i_max,
            j_max,
        }
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.i_min <= i && i <= self.i_max && self.j_min <= j && j <= self.j_max
    }

    pub fn height(&self) -> usize {
        self.i_max - self.i_min + 1
    }

    pub fn width(&self) -> usize {
        self.j_max - self.j_min + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    /// Checks the box against a `height` x `width` grid. `index` is only used
    /// to name the box in the error.
    pub fn validate(&self, index: usize, height: usize, width: usize) -> Result<(), GeometryError> {
        if self.class_id == 0 {
            return Err(GeometryError::BackgroundClass {
                index,
                class_id: self.class_id,
            });
        }
        if self.i_min > self.i_max || self.j_min > self.j_max {
            return Err(GeometryError::InvertedCorners {
                index,
                i_min: self.i_min,
                j_min: self.j_min,
                i_max: self.i_max,
                j_max: self.j_max,
            });
        }
        if self.i_max >= height || self.j_max >= width {
            return Err(GeometryError::OutOfBounds {
                index,
                i_max: self.i_max,
                j_max: self.j_max,
                height,
                width,
            });
        }
        Ok(())
    }

    /// Shifts the box; `None` if a corner would leave the non-negative quadrant.
    pub fn translated(&self, di: isize, dj: isize) -> Option<Self> {
        let shift = |v: usize, d: isize| v.checked_add_signed(d);
        Some(Self {
            class_id: self.class_id,
            i_min: shift(self.i_min, di)?,
            j_min: shift(self.j_min, dj)?,
            i_max: shift(self.i_max, di)?,
            j_max: shift(self.j_max, dj)?,
        })
    }

    /// Unsigned distance from pixel `(i, j)` to the rectangle perimeter.
    #[inline]
    pub fn boundary_distance(&self, i: usize, j: usize) -> f64 {
        let (i, j) = (i as i64, j as i64);
        let (i0, j0, i1, j1) = (
            self.i_min as i64,
            self.j_min as i64,
            self.i_max as i64,
            self.j_max as i64,
        );
        if i0 <= i && i <= i1 && j0 <= j && j <= j1 {
            (i - i0).min(i1 - i).min(j - j0).min(j1 - j) as f64
        } else {
            let di = (i0 - i).max(0).max(i - i1);
            let dj = (j0 - j).max(0).max(j - j1);
            ((di * di + dj * dj) as f64).sqrt()
        }
    }
}

pub fn validate_boxes(boxes: &[BoundingBox], height: usize, width: usize) -> Result<(), GeometryError> {
    if height == 0 || width == 0 {
        return Err(GeometryError::EmptyGrid { height, width });
    }
    boxes
        .iter()
        .enumerate()
        .try_for_each(|(k, b)| b.validate(k, height, width))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapOptions {
    /// Write the nearest box's class at every pixel, including outside all
    /// boxes (the literal pseudo-code behaviour). Off by default, where
    /// outside pixels carry class 0.
    #[serde(default)]
    pub class_everywhere: bool,
}

/// Signed distance map and class map for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningMaps {
    pub distance: Array2<f64>,
    pub class_map: Array2<u8>,
    /// `max(height, width)`; also the magnitude of the no-box sentinel.
    pub d_max: f64,
}

impl ConditioningMaps {
    pub fn height(&self) -> usize {
        self.distance.nrows()
    }

    pub fn width(&self) -> usize {
        self.distance.ncols()
    }

    fn empty(height: usize, width: usize) -> Self {
        let d_max = height.max(width) as f64;
        Self {
            distance: Array2::from_elem((height, width), -d_max),
            class_map: Array2::zeros((height, width)),
            d_max,
        }
    }
}

/// Running per-pixel state while folding boxes in list order. Strict `<`
/// keeps the first box on ties.
#[derive(Clone, Copy)]
struct PixelBest {
    nearest: f64,
    nearest_class: u8,
    inside: f64,
    inside_class: u8,
}

impl PixelBest {
    const INIT: Self = Self {
        nearest: f64::INFINITY,
        nearest_class: 0,
        inside: f64::INFINITY,
        inside_class: 0,
    };

    #[inline]
    fn update(&mut self, d: f64, contains: bool, class_id: u8) {
        if d < self.nearest {
            self.nearest = d;
            self.nearest_class = class_id;
        }
        if contains && d < self.inside {
            self.inside = d;
            self.inside_class = class_id;
        }
    }

    #[inline]
    fn resolve(&self, opts: MapOptions) -> (f64, u8) {
        if self.inside.is_finite() {
            (self.nearest, self.inside_class)
        } else if opts.class_everywhere {
            (-self.nearest, self.nearest_class)
        } else {
            (-self.nearest, 0)
        }
    }
}

/// Enumerates the integer perimeter pixels of `b` (each exactly once).
fn boundary_pixels(b: &BoundingBox) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(2 * (b.height() + b.width()));
    for j in b.j_min..=b.j_max {
        out.push((b.i_min, j));
        if b.i_max != b.i_min {
            out.push((b.i_max, j));
        }
    }
    if b.i_max > b.i_min + 1 {
        for i in b.i_min + 1..b.i_max {
            out.push((i, b.j_min));
            if b.j_max != b.j_min {
                out.push((i, b.j_max));
            }
        }
    }
    out
}

/// Reference implementation: for each box, rasterize its boundary and take
/// the minimum Euclidean distance over boundary pixels, updating per-pixel
/// state in box order.
///
/// The magnitude is the nearest boundary over all boxes; the sign is positive
/// iff the pixel lies in (or on) some box; the class is that of the nearest
/// boundary among the boxes containing the pixel.
pub fn compute_maps_reference(
    boxes: &[BoundingBox],
    height: usize,
    width: usize,
    opts: MapOptions,
) -> Result<ConditioningMaps, GeometryError> {
    validate_boxes(boxes, height, width)?;
    if boxes.is_empty() {
        return Ok(ConditioningMaps::empty(height, width));
    }
    let mut best = Array2::from_elem((height, width), PixelBest::INIT);
    for b in boxes {
        let beta = boundary_pixels(b);
        for ((i, j), px) in best.indexed_iter_mut() {
            let d2 = beta
                .iter()
                .map(|&(bi, bj)| {
                    let di = i as i64 - bi as i64;
                    let dj = j as i64 - bj as i64;
                    di * di + dj * dj
                })
                .min()
                .expect("boundary is never empty");
            px.update((d2 as f64).sqrt(), b.contains(i, j), b.class_id);
        }
    }
    Ok(assemble(&best, height, width, opts))
}

/// Closed-form implementation, `O(H * W * K)` with no boundary enumeration.
pub fn compute_maps_fast(
    boxes: &[BoundingBox],
    height: usize,
    width: usize,
    opts: MapOptions,
) -> Result<ConditioningMaps, GeometryError> {
    validate_boxes(boxes, height, width)?;
    if boxes.is_empty() {
        return Ok(ConditioningMaps::empty(height, width));
    }
    let mut best = Array2::from_elem((height, width), PixelBest::INIT);
    for ((i, j), px) in best.indexed_iter_mut() {
        for b in boxes {
            px.update(b.boundary_distance(i, j), b.contains(i, j), b.class_id);
        }
    }
    Ok(assemble(&best, height, width, opts))
}

fn assemble(best: &Array2<PixelBest>, height: usize, width: usize, opts: MapOptions) -> ConditioningMaps {
    let mut maps = ConditioningMaps::empty(height, width);
    for (px, (d, c)) in best
        .iter()
        .zip(maps.distance.iter_mut().zip(maps.class_map.iter_mut()))
    {
        (*d, *c) = px.resolve(opts);
    }
    maps
}

/// Scales distances by `d_max` and clamps to `[-1, 1]`. The no-box sentinel
/// lands exactly on `-1`.
pub fn normalize_distance(maps: &ConditioningMaps) -> Array2<f32> {
    maps.distance
        .mapv(|d| (d / maps.d_max).clamp(-1.0, 1.0) as f32)
}
