//! Encoder-decoder segmentation network for downstream evaluation of
//! synthetic data.

use std::collections::BTreeMap;

use boxforge_core::metrics::{confusions, merge_confusions, F1Report};
use boxforge_core::seed::derive_seed;
use boxforge_core::{ClassAlphabet, LabeledSample};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{BlockSpec, Conv2d, GroupNorm, ResBlock};
use crate::{AdamW, AdamWConfig, Graph, NnError, ParamBuilder, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub base_width: usize,
    pub channel_mult: Vec<usize>,
    pub norm_groups: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    /// One binary network per defect class instead of one multi-class one.
    pub per_class: bool,
    /// Weight the loss by inverse square-root class frequency.
    pub class_weighting: bool,
    /// Random horizontal and vertical flips.
    pub flips: bool,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            base_width: 16,
            channel_mult: vec![1, 2],
            norm_groups: 8,
            epochs: 30,
            batch_size: 8,
            optimizer: AdamWConfig {
                lr: 2e-3,
                weight_decay: 1e-4,
                ..AdamWConfig::default()
            },
            seed: 0,
            per_class: false,
            class_weighting: true,
            flips: true,
        }
    }
}

#[derive(Debug, Clone)]
struct SegNet {
    conv_in: Conv2d,
    down_blocks: Vec<ResBlock>,
    downsample: Vec<Conv2d>,
    mid: ResBlock,
    up_blocks: Vec<ResBlock>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl SegNet {
    fn build(cfg: &SegmenterConfig, outputs: usize, seed: u64) -> Result<(Self, ParamStore<f32>), NnError> {
        if cfg.base_width == 0 || cfg.channel_mult.is_empty() || cfg.channel_mult.contains(&0) || cfg.norm_groups == 0 {
            return Err(NnError::Config(format!(
                "segmenter widths must be positive: base {} mult {:?}",
                cfg.base_width, cfg.channel_mult
            )));
        }
        let mut pb = ParamBuilder::new(seed);
        let width = |l: usize| cfg.base_width * cfg.channel_mult[l];
        let block = |cin, cout| BlockSpec {
            cin,
            cout,
            temb: None,
            groups: cfg.norm_groups,
        };
        let levels = cfg.channel_mult.len();
        let conv_in = Conv2d::new(&mut pb, "conv_in", 3, cfg.base_width, 3, 1, false);
        let (mut down_blocks, mut downsample) = (Vec::new(), Vec::new());
        let mut cur = cfg.base_width;
        for l in 0..levels - 1 {
            down_blocks.push(ResBlock::new(&mut pb, &format!("down.{l}.block"), block(cur, width(l))));
            downsample.push(Conv2d::new(&mut pb, &format!("down.{l}.sample"), width(l), width(l + 1), 3, 2, false));
            cur = width(l + 1);
        }
        let mid = ResBlock::new(&mut pb, "mid", block(cur, cur));
        let mut up_blocks = Vec::new();
        for l in (0..levels - 1).rev() {
            up_blocks.push(ResBlock::new(&mut pb, &format!("up.{l}.block"), block(cur + width(l), width(l))));
            cur = width(l);
        }
        let norm_out = GroupNorm::new(&mut pb, "norm_out", cur, cfg.norm_groups);
        let conv_out = Conv2d::new(&mut pb, "conv_out", cur, outputs, 1, 1, false);
        let net = Self {
            conv_in,
            down_blocks,
            downsample,
            mid,
            up_blocks,
            norm_out,
            conv_out,
        };
        Ok((net, pb.finish()))
    }

    fn forward(&self, g: &mut Graph<f32>, x: Var) -> Var {
        let mut h = self.conv_in.forward(g, x);
        let mut skips = Vec::new();
        for (blk, down) in self.down_blocks.iter().zip(&self.downsample) {
            h = blk.forward(g, h, None);
            skips.push(h);
            h = down.forward(g, h);
        }
        h = self.mid.forward(g, h, None);
        for blk in &self.up_blocks {
            h = g.upsample2(h);
            let skip = skips.pop().expect("one skip per level");
            h = g.concat(h, skip);
            h = blk.forward(g, h, None);
        }
        let h = self.norm_out.forward(g, h);
        let h = g.silu(h);
        self.conv_out.forward(g, h)
    }
}

/// Trained segmentation model.
#[derive(Debug, Clone)]
pub struct Segmenter {
    alphabet: ClassAlphabet,
    per_class: bool,
    heads: Vec<(SegNet, ParamStore<f32>)>,
    /// Mean training loss per epoch, one series per head.
    pub loss_history: Vec<Vec<f64>>,
}

fn image_tensor(images: &[&Array3<u8>]) -> Tensor<f32> {
    let (h, w, _) = images[0].dim();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        for c in 0..3 {
            for i in 0..h {
                for j in 0..w {
                    data.push(img[[i, j, c]] as f32 / 127.5 - 1.0);
                }
            }
        }
    }
    Tensor::from_vec(&[images.len(), 3, h, w], data)
}

fn flip(img: &Array3<u8>, mask: &Array2<u8>, fh: bool, fv: bool) -> (Array3<u8>, Array2<u8>) {
    let (h, w) = mask.dim();
    let src = |i: usize, j: usize| (if fv { h - 1 - i } else { i }, if fh { w - 1 - j } else { j });
    let img = Array3::from_shape_fn(img.dim(), |(i, j, c)| {
        let (a, b) = src(i, j);
        img[[a, b, c]]
    });
    let mask = Array2::from_shape_fn((h, w), |(i, j)| mask[src(i, j)]);
    (img, mask)
}

fn check_samples(samples: &[LabeledSample], alphabet: &ClassAlphabet, depth: usize) -> Result<(usize, usize), NnError> {
    let first = samples.first().ok_or_else(|| NnError::EmptyDataset("no segmentation training samples".into()))?;
    let (h, w) = first.mask.dim();
    let k = 1 << depth;
    if h % k != 0 || w % k != 0 {
        return Err(NnError::Shape(format!("image size {h}x{w} must be a multiple of {k}")));
    }
    for (idx, s) in samples.iter().enumerate() {
        if s.mask.dim() != (h, w) || s.image.dim() != (h, w, 3) {
            return Err(NnError::Shape(format!("sample {idx} is not {h}x{w}")));
        }
        if let Some(v) = s.mask.iter().find(|&&v| !alphabet.contains(v)) {
            return Err(NnError::Shape(format!("sample {idx} has mask value {v} outside the alphabet")));
        }
    }
    Ok((h, w))
}

/// Trains the segmenter; `alphabet` class ids index the logits as `id - 1`.
pub fn train_segmenter(samples: &[LabeledSample], alphabet: &ClassAlphabet, cfg: &SegmenterConfig) -> Result<Segmenter, NnError> {
    if cfg.batch_size == 0 {
        return Err(NnError::Config("batch_size must be positive".into()));
    }
    check_samples(samples, alphabet, cfg.channel_mult.len().saturating_sub(1))?;
    let c = alphabet.num_classes();
    // each head: (outputs, label map from class id)
    let targets: Vec<Option<u8>> = if cfg.per_class {
        alphabet.defect_classes().map(Some).collect()
    } else {
        vec![None]
    };
    let mut heads = Vec::new();
    let mut loss_history = Vec::new();
    for (hi, target) in targets.iter().enumerate() {
        let outputs = if target.is_some() { 2 } else { c };
        let label = |v: u8| -> u8 {
            match target {
                Some(t) => u8::from(v == *t),
                None => v - 1,
            }
        };
        let head_seed = derive_seed(cfg.seed, 1000 + hi as u64);
        let (net, mut params) = SegNet::build(cfg, outputs, head_seed)?;
        let weights: Option<Vec<f32>> = cfg.class_weighting.then(|| {
            let mut counts = vec![0u64; outputs];
            for s in samples {
                for &v in s.mask.iter() {
                    counts[label(v) as usize] += 1;
                }
            }
            let bg = counts[0].max(1) as f64;
            counts
                .iter()
                .enumerate()
                .map(|(k, &n)| if k == 0 || n == 0 { 1.0 } else { (bg / n as f64).sqrt().clamp(1.0, 10.0) as f32 })
                .collect()
        });
        let mut opt = AdamW::new(cfg.optimizer, &params);
        let mut history = Vec::new();
        for epoch in 0..cfg.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(head_seed, epoch as u64));
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut rng);
            let (mut sum, mut n) = (0.0, 0);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<(Array3<u8>, Array2<u8>)> = chunk
                    .iter()
                    .map(|&i| {
                        let s = &samples[i];
                        let (fh, fv) = if cfg.flips { (rng.random::<bool>(), rng.random::<bool>()) } else { (false, false) };
                        flip(&s.image, &s.mask, fh, fv)
                    })
                    .collect();
                let imgs: Vec<&Array3<u8>> = batch.iter().map(|(i, _)| i).collect();
                let labels: Vec<u8> = batch.iter().flat_map(|(_, m)| m.iter().map(|&v| label(v))).collect();
                let grads = {
                    let mut g = Graph::new(&params, true);
                    let x = g.input(image_tensor(&imgs));
                    let logits = net.forward(&mut g, x);
                    let loss = g.cross_entropy(logits, &labels, weights.as_deref());
                    let lv = g.value(loss).item() as f64;
                    if !lv.is_finite() {
                        return Err(NnError::NonFinite {
                            epoch,
                            step: opt.step,
                            loss: lv,
                        });
                    }
                    sum += lv;
                    n += 1;
                    g.backward(loss)
                };
                opt.update(&mut params, &grads, cfg.optimizer.lr);
            }
            history.push(sum / n as f64);
        }
        loss_history.push(history);
        heads.push((net, params));
    }
    Ok(Segmenter {
        alphabet: alphabet.clone(),
        per_class: cfg.per_class,
        heads,
        loss_history,
    })
}

impl Segmenter {
    pub fn alphabet(&self) -> &ClassAlphabet {
        &self.alphabet
    }

    /// Predicted class maps for a list of `H x W x 3` images of one size.
    pub fn predict(&self, images: &[&Array3<u8>]) -> Vec<Array2<u8>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(32) {
            let (h, w, _) = chunk[0].dim();
            let hw = h * w;
            let x = image_tensor(chunk);
            let logits: Vec<Tensor<f32>> = self
                .heads
                .iter()
                .map(|(net, params)| {
                    let mut g = Graph::new(params, false);
                    let xv = g.input(x.clone());
                    let y = net.forward(&mut g, xv);
                    g.take(y)
                })
                .collect();
            for n in 0..chunk.len() {
                let mask = Array2::from_shape_fn((h, w), |(i, j)| {
                    let p = i * w + j;
                    if self.per_class {
                        // binary heads: defect wins when its logit beats background
                        let mut best: Option<(f32, u8)> = None;
                        for (t, cls) in logits.iter().zip(self.alphabet.defect_classes()) {
                            let d = t.data();
                            let margin = d[(n * 2 + 1) * hw + p] - d[n * 2 * hw + p];
                            if margin > 0.0 && best.is_none_or(|(m, _)| margin > m) {
                                best = Some((margin, cls));
                            }
                        }
                        best.map_or(self.alphabet.background(), |(_, c)| c)
                    } else {
                        let c = self.alphabet.num_classes();
                        let d = logits[0].data();
                        let mut arg = 0;
                        for k in 1..c {
                            if d[(n * c + k) * hw + p] > d[(n * c + arg) * hw + p] {
                                arg = k;
                            }
                        }
                        arg as u8 + 1
                    }
                });
                out.push(mask);
            }
        }
        out
    }

    /// Pixel-level F1 accumulated over all test samples.
    pub fn evaluate(&self, test: &[LabeledSample]) -> F1Report {
        let preds = self.predict(&test.iter().map(|s| &s.image).collect::<Vec<_>>());
        let mut acc = BTreeMap::new();
        for (p, s) in preds.iter().zip(test) {
            merge_confusions(&mut acc, &confusions(p.view(), s.mask.view(), &self.alphabet));
        }
        F1Report::from_confusions(&acc, &self.alphabet)
    }
}
