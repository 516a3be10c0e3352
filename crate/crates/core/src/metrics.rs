//! Layout alignment metrics and pixel F1.
//!
//! * SAE: share of generated defect pixels that fall outside every box
//!   designated for them.
//! * EBR: share of boxes that received no generated pixel.
//!
//! Both are accumulated as raw counts so dataset-level averages can be
//! recomputed from a report. Values are percentages; an empty denominator
//! is reported as `None` ("absent") rather than 0.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::codec::ClassAlphabet;
use crate::geometry::BoundingBox;

/// How a generated pixel is matched against boxes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// A class-c pixel counts as inside only when it lies in a class-c box.
    #[default]
    SameClass,
    /// Any box will do.
    ClassAgnostic,
}

impl MatchMode {
    #[inline]
    fn accepts(self, pixel_class: u8, b: &BoundingBox) -> bool {
        match self {
            MatchMode::SameClass => b.class_id == pixel_class,
            MatchMode::ClassAgnostic => true,
        }
    }
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Raw SAE counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub total: u64,
    pub outside: u64,
}

/// Raw EBR counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxCounts {
    pub total: u64,
    pub missed: u64,
}

/// Counts an [`AlignmentReport`] is derived from, keyed by class id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentCounts {
    pub pixels: BTreeMap<u8, PixelCounts>,
    pub boxes: BTreeMap<u8, BoxCounts>,
}

impl AlignmentCounts {
    pub fn merge(&mut self, other: &AlignmentCounts) {
        for (c, p) in &other.pixels {
            let e = self.pixels.entry(*c).or_default();
            e.total += p.total;
            e.outside += p.outside;
        }
        for (c, b) in &other.boxes {
            let e = self.boxes.entry(*c).or_default();
            e.total += b.total;
            e.missed += b.missed;
        }
    }
}

/// SAE pixel counts for one mask.
pub fn sae_counts(mask: ArrayView2<u8>, boxes: &[BoundingBox], alphabet: &ClassAlphabet, mode: MatchMode) -> BTreeMap<u8, PixelCounts> {
    let mut counts: BTreeMap<u8, PixelCounts> = alphabet.defect_classes().map(|c| (c, PixelCounts::default())).collect();
    let bg = alphabet.background();
    for ((i, j), &c) in mask.indexed_iter() {
        if c == bg {
            continue;
        }
        let e = counts.entry(c).or_default();
        e.total += 1;
        if !boxes.iter().any(|b| mode.accepts(c, b) && b.contains(i, j)) {
            e.outside += 1;
        }
    }
    counts
}

/// EBR box counts for one mask.
pub fn ebr_counts(mask: ArrayView2<u8>, boxes: &[BoundingBox], alphabet: &ClassAlphabet, mode: MatchMode) -> BTreeMap<u8, BoxCounts> {
    let mut counts: BTreeMap<u8, BoxCounts> = alphabet.defect_classes().map(|c| (c, BoxCounts::default())).collect();
    let bg = alphabet.background();
    for b in boxes {
        let filled = (b.i_min..=b.i_max).any(|i| {
            (b.j_min..=b.j_max).any(|j| {
                let c = mask[[i, j]];
                c != bg && mode.accepts(c, b)
            })
        });
        let e = counts.entry(b.class_id).or_default();
        e.total += 1;
        if !filled {
            e.missed += 1;
        }
    }
    counts
}

pub fn alignment_counts(mask: ArrayView2<u8>, boxes: &[BoundingBox], alphabet: &ClassAlphabet, mode: MatchMode) -> AlignmentCounts {
    AlignmentCounts {
        pixels: sae_counts(mask, boxes, alphabet, mode),
        boxes: ebr_counts(mask, boxes, alphabet, mode),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAlignment {
    pub class_id: u8,
    pub name: String,
    pub sae: Option<f64>,
    pub ebr: Option<f64>,
}

/// Per-class and averaged SAE/EBR, with the counts they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub per_class: Vec<ClassAlignment>,
    /// Over all generated defect pixels.
    pub sae_micro: Option<f64>,
    /// Over all boxes.
    pub ebr_average: Option<f64>,
    pub generated_pixels: u64,
    pub outside_pixels: u64,
    pub total_boxes: u64,
    pub missed_boxes: u64,
    pub mode: MatchMode,
    pub counts: AlignmentCounts,
}

impl AlignmentReport {
    pub fn from_counts(counts: AlignmentCounts, alphabet: &ClassAlphabet, mode: MatchMode) -> Self {
        let generated_pixels = counts.pixels.values().map(|p| p.total).sum();
        let outside_pixels = counts.pixels.values().map(|p| p.outside).sum();
        let total_boxes = counts.boxes.values().map(|b| b.total).sum();
        let missed_boxes = counts.boxes.values().map(|b| b.missed).sum();
        let per_class = alphabet
            .defect_classes()
            .map(|c| {
                let p = counts.pixels.get(&c).copied().unwrap_or_default();
                let b = counts.boxes.get(&c).copied().unwrap_or_default();
                ClassAlignment {
                    class_id: c,
                    name: alphabet.class_names()[c as usize - 1].clone(),
                    sae: percent(p.outside, p.total),
                    ebr: percent(b.missed, b.total),
                }
            })
            .collect();
        Self {
            per_class,
            sae_micro: percent(outside_pixels, generated_pixels),
            ebr_average: percent(missed_boxes, total_boxes),
            generated_pixels,
            outside_pixels,
            total_boxes,
            missed_boxes,
            mode,
            counts,
        }
    }

    /// Report for a single mask.
    pub fn for_mask(mask: ArrayView2<u8>, boxes: &[BoundingBox], alphabet: &ClassAlphabet, mode: MatchMode) -> Self {
        Self::from_counts(alignment_counts(mask, boxes, alphabet, mode), alphabet, mode)
    }

    /// Plain-text table: one column per defect class plus the average.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut header = format!("{:<8}", "");
        let mut sae = format!("{:<8}", "SAE %");
        let mut ebr = format!("{:<8}", "EBR %");
        for c in &self.per_class {
            header.push_str(&format!(" | {:>10}", c.name));
            sae.push_str(&format!(" | {:>10}", fmt(c.sae)));
            ebr.push_str(&format!(" | {:>10}", fmt(c.ebr)));
        }
        header.push_str(&format!(" | {:>10}", "Avg"));
        sae.push_str(&format!(" | {:>10}", fmt(self.sae_micro)));
        ebr.push_str(&format!(" | {:>10}", fmt(self.ebr_average)));
        format!("{header}\n{sae}\n{ebr}\n")
    }
}

/// Dataset-level accumulation; order of `add` calls does not matter.
#[derive(Debug, Clone, Default)]
pub struct AlignmentAccumulator {
    counts: AlignmentCounts,
    mode: MatchMode,
}

impl AlignmentAccumulator {
    pub fn new(mode: MatchMode) -> Self {
        Self {
            counts: AlignmentCounts::default(),
            mode,
        }
    }

    pub fn add(&mut self, mask: ArrayView2<u8>, boxes: &[BoundingBox], alphabet: &ClassAlphabet) {
        self.counts.merge(&alignment_counts(mask, boxes, alphabet, self.mode));
    }

    pub fn finish(self, alphabet: &ClassAlphabet) -> AlignmentReport {
        AlignmentReport::from_counts(self.counts, alphabet, self.mode)
    }
}

/// Sets every defect pixel that lies in no box of its own class to background.
pub fn clip_labels_to_boxes(mask: ArrayView2<u8>, boxes: &[BoundingBox], alphabet: &ClassAlphabet) -> Array2<u8> {
    let bg = alphabet.background();
    let mut out = mask.to_owned();
    for ((i, j), c) in out.indexed_iter_mut() {
        if *c != bg && !boxes.iter().any(|b| b.class_id == *c && b.contains(i, j)) {
            *c = bg;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn f1(&self) -> Option<f64> {
        let den = 2 * self.tp + self.fp + self.fn_;
        percent(2 * self.tp, den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub class_id: u8,
    pub name: String,
    pub f1: Option<f64>,
    pub confusion: Confusion,
    pub in_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassF1>,
    /// Mean over defect classes present in the ground truth.
    pub macro_f1: Option<f64>,
}

impl F1Report {
    pub fn from_confusions(conf: &BTreeMap<u8, Confusion>, alphabet: &ClassAlphabet) -> Self {
        let per_class: Vec<ClassF1> = alphabet
            .defect_classes()
            .map(|c| {
                let confusion = conf.get(&c).copied().unwrap_or_default();
                ClassF1 {
                    class_id: c,
                    name: alphabet.class_names()[c as usize - 1].clone(),
                    f1: confusion.f1(),
                    confusion,
                    in_truth: confusion.tp + confusion.fn_ > 0,
                }
            })
            .collect();
        let present: Vec<f64> = per_class.iter().filter(|c| c.in_truth).filter_map(|c| c.f1).collect();
        let macro_f1 = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        Self { per_class, macro_f1 }
    }
}

/// Per defect class confusion counts between two masks.
pub fn confusions(pred: ArrayView2<u8>, truth: ArrayView2<u8>, alphabet: &ClassAlphabet) -> BTreeMap<u8, Confusion> {
    assert_eq!(pred.dim(), truth.dim(), "prediction and truth shapes differ");
    let mut out: BTreeMap<u8, Confusion> = alphabet.defect_classes().map(|c| (c, Confusion::default())).collect();
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        if p == t {
            if let Some(e) = out.get_mut(&p) {
                e.tp += 1;
            }
        } else {
            if let Some(e) = out.get_mut(&p) {
                e.fp += 1;
            }
            if let Some(e) = out.get_mut(&t) {
                e.fn_ += 1;
            }
        }
    }
    out
}

pub fn merge_confusions(acc: &mut BTreeMap<u8, Confusion>, other: &BTreeMap<u8, Confusion>) {
    for (c, x) in other {
        let e = acc.entry(*c).or_default();
        e.tp += x.tp;
        e.fp += x.fp;
        e.fn_ += x.fn_;
    }
}

pub fn pixel_f1(pred: ArrayView2<u8>, truth: ArrayView2<u8>, alphabet: &ClassAlphabet) -> F1Report {
    F1Report::from_confusions(&confusions(pred, truth, alphabet), alphabet)
}
