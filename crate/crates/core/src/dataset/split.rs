use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Manifest, Split};

/// Fractions for (diffusion_train, seg_train, test).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions(pub [f64; 3]);

impl Default for SplitFractions {
    fn default() -> Self {
        Self([0.7, 0.2, 0.1])
    }
}

/// Bucket sizes for `n` records: floor every bucket, then hand the leftover
/// records to the buckets with the largest fractional parts (declared order
/// breaks ties).
pub fn split_counts(n: usize, fractions: SplitFractions) -> Result<[usize; 3], DatasetError> {
    let f = fractions.0;
    let sum: f64 = f.iter().sum();
    if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Fractions(f));
    }
    let exact: Vec<f64> = f.iter().map(|&x| x * n as f64).collect();
    // nudge products such as 0.7 * 10 = 6.999... back onto the integer
    let mut counts: [usize; 3] = [0; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = (e + 1e-9).floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    Ok(counts)
}

/// Shuffles record indices with `seed` and labels contiguous runs of the
/// shuffled order. Record order in the manifest is left untouched.
pub fn split_dataset(manifest: &mut Manifest, fractions: SplitFractions, seed: u64) -> Result<[usize; 3], DatasetError> {
    let n = manifest.records.len();
    let counts = split_counts(n, fractions)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pos = 0;
    for (split, &count) in Split::ORDERED.iter().zip(&counts) {
        for &idx in &order[pos..pos + count] {
            manifest.records[idx].split = *split;
        }
        pos += count;
    }
    Ok(counts)
}
