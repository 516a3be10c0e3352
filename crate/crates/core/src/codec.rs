//! Analog-bit encoding of discrete class grids.
//!
//! Class `c` (1-based) is written as the big-endian binary expansion of
//! `c - 1` over `ceil(log2 C)` channels, with bit 0 mapped to `-1` and bit 1
//! to `+1`. Decoding thresholds each channel at zero; codes that name no
//! class fall back to the nearest valid code by Hamming distance.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on alphabet size; class ids are stored as `u8`.
pub const MAX_CLASSES: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("an alphabet needs at least 2 classes (background + 1 defect), got {0}")]
    TooFewClasses(usize),
    #[error("at most {MAX_CLASSES} classes are supported, got {0}")]
    TooManyClasses(usize),
    #[error("pixel ({i}, {j}) holds class {value}, outside 1..={num_classes}")]
    ClassOutOfRange {
        i: usize,
        j: usize,
        value: u8,
        num_classes: usize,
    },
    #[error("expected {expected} bit channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
}

/// Class vocabulary. Class 1 is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AlphabetRepr", into = "AlphabetRepr")]
pub struct ClassAlphabet {
    class_names: Vec<String>,
    bit_width: usize,
    /// code -> class id, for every code in `0..2^bit_width`
    fallback: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct AlphabetRepr {
    class_names: Vec<String>,
}

impl TryFrom<AlphabetRepr> for ClassAlphabet {
    type Error = CodecError;
    fn try_from(r: AlphabetRepr) -> Result<Self, Self::Error> {
        Self::new(r.class_names)
    }
}

impl From<ClassAlphabet> for AlphabetRepr {
    fn from(a: ClassAlphabet) -> Self {
        AlphabetRepr {
            class_names: a.class_names,
        }
    }
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn bits_for(n: usize) -> usize {
    (usize::BITS - (n.max(1) - 1).leading_zeros()) as usize
}

impl ClassAlphabet {
    pub fn new(class_names: Vec<String>) -> Result<Self, CodecError> {
        let c = class_names.len();
        if c < 2 {
            return Err(CodecError::TooFewClasses(c));
        }
        if c > MAX_CLASSES {
            return Err(CodecError::TooManyClasses(c));
        }
        let bit_width = bits_for(c);
        let fallback = (0..1usize << bit_width)
            .map(|code| {
                if code < c {
                    (code + 1) as u8
                } else {
                    // min Hamming distance, lowest class id on ties
                    let best = (0..c)
                        .min_by_key(|&v| ((v ^ code).count_ones(), v))
                        .expect("c >= 2");
                    (best + 1) as u8
                }
            })
            .collect();
        Ok(Self {
            class_names,
            bit_width,
            fallback,
        })
    }

    /// Background plus `num_classes - 1` generically named defect classes.
    pub fn with_classes(num_classes: usize) -> Result<Self, CodecError> {
        let names = (1..=num_classes)
            .map(|c| {
                if c == 1 {
                    "background".to_string()
                } else {
                    format!("defect_{}", c - 1)
                }
            })
            .collect();
        Self::new(names)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn bit_width(&self) -> usize {
        self.bit_width
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn background(&self) -> u8 {
        1
    }

    /// Defect class ids, `2..=C`.
    pub fn defect_classes(&self) -> impl Iterator<Item = u8> + '_ {
        2..=self.num_classes() as u8
    }

    pub fn contains(&self, class_id: u8) -> bool {
        class_id >= 1 && (class_id as usize) <= self.num_classes()
    }

    /// Bits of class `c`, most significant first, as `{-1, +1}`.
    pub fn code_of(&self, class_id: u8) -> impl Iterator<Item = f32> {
        let code = class_id as usize - 1;
        let b = self.bit_width;
        (0..b).map(move |k| if (code >> (b - 1 - k)) & 1 == 1 { 1.0 } else { -1.0 })
    }

    /// Class id for a raw integer code, including the Hamming fallback.
    pub fn class_of_code(&self, code: usize) -> u8 {
        self.fallback[code]
    }
}

/// Encodes a class grid into `bit_width` channels (channel-first layout).
pub fn encode(grid: ArrayView2<u8>, alphabet: &ClassAlphabet) -> Result<Array3<f32>, CodecError> {
    let (h, w) = grid.dim();
    let b = alphabet.bit_width();
    let mut out = Array3::<f32>::zeros((b, h, w));
    for ((i, j), &v) in grid.indexed_iter() {
        if !alphabet.contains(v) {
            return Err(CodecError::ClassOutOfRange {
                i,
                j,
                value: v,
                num_classes: alphabet.num_classes(),
            });
        }
        for (k, bit) in alphabet.code_of(v).enumerate() {
            out[[k, i, j]] = bit;
        }
    }
    Ok(out)
}

/// Thresholds bit channels at zero and maps codes back to class ids.
pub fn decode(bits: ArrayView3<f32>, alphabet: &ClassAlphabet) -> Result<Array2<u8>, CodecError> {
    let (b, h, w) = bits.dim();
    if b != alphabet.bit_width() {
        return Err(CodecError::ChannelMismatch {
            expected: alphabet.bit_width(),
            got: b,
        });
    }
    Ok(Array2::from_shape_fn((h, w), |(i, j)| {
        let code = (0..b).fold(0usize, |acc, k| (acc << 1) | usize::from(bits[[k, i, j]] > 0.0));
        alphabet.class_of_code(code)
    }))
}
