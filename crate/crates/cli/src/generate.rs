use boxforge_core::diffusion::{condition_channels, decode_joint, joint_channels, pack_condition, sample, NoiseSchedule, SampleOptions};
use boxforge_core::geometry::{compute_maps_fast, validate_boxes, MapOptions};
use boxforge_core::{BoundingBox, ClassAlphabet};
use boxforge_nn::{JointPredictor, Model};
use ndarray::{Array2, Array3, Array4, Axis};

use crate::CliError;

/// A box layout to synthesize, with its own sampler seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub height: usize,
    pub width: usize,
    pub boxes: Vec<BoundingBox>,
    pub seed: u64,
}

/// Samples one image/mask pair per layout. Runs of consecutive layouts with
/// the same size share a batch of at most `batch` chains; each chain only
/// depends on its own seed, so batching never changes the output.
pub fn generate_layouts(
    model: &Model<f32>,
    schedule: &NoiseSchedule,
    alphabet: &ClassAlphabet,
    layouts: &[Layout],
    opts: SampleOptions,
    zero_condition: bool,
    batch: usize,
    mut progress: impl FnMut(usize),
) -> Result<Vec<(Array3<u8>, Array2<u8>)>, CliError> {
    let b = alphabet.bit_width();
    let mut out = Vec::with_capacity(layouts.len());
    let mut start = 0;
    while start < layouts.len() {
        let (h, w) = (layouts[start].height, layouts[start].width);
        let mut end = start + 1;
        while end < layouts.len() && end - start < batch.max(1) && (layouts[end].height, layouts[end].width) == (h, w) {
            end += 1;
        }
        let group = &layouts[start..end];
        let mut cond = Array4::<f32>::zeros((group.len(), condition_channels(b), h, w));
        for (n, l) in group.iter().enumerate() {
            validate_boxes(&l.boxes, h, w).map_err(|e| CliError::Validation(format!("layout {}: {e}", start + n)))?;
            if !zero_condition {
                let maps = compute_maps_fast(&l.boxes, h, w, MapOptions::default()).map_err(|e| CliError::Validation(e.to_string()))?;
                cond.index_axis_mut(Axis(0), n).assign(&pack_condition(&maps, alphabet)?);
            }
        }
        let seeds: Vec<u64> = group.iter().map(|l| l.seed).collect();
        let predictor = JointPredictor { model, max_batch: batch };
        let x = sample(&predictor, cond.view(), joint_channels(b), schedule, &seeds, opts)?;
        for n in 0..group.len() {
            out.push(decode_joint(x.index_axis(Axis(0), n), alphabet)?);
        }
        start = end;
        progress(out.len());
    }
    Ok(out)
}
