use serde::{Deserialize, Serialize};

use crate::layers::{BlockSpec, Conv2d, GroupNorm, Linear, ResBlock};
use crate::{Graph, NnError, ParamBuilder, ParamStore, Scalar, Tensor, Var};

/// Architecture of the noise-prediction UNet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Noisy joint channels plus conditioning channels.
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    /// Width multiplier per resolution level; one halving between levels.
    pub channel_mult: Vec<usize>,
    pub time_embed_dim: usize,
    pub norm_groups: usize,
}

impl DenoiserConfig {
    /// Joint image+mask denoiser for a `b`-bit class code: `3 + b` noisy
    /// channels and `1 + b` conditioning channels in, `3 + b` out.
    pub fn joint(bit_width: usize, base_width: usize, channel_mult: Vec<usize>, time_embed_dim: usize) -> Self {
        Self {
            in_channels: 2 * bit_width + 4,
            out_channels: bit_width + 3,
            base_width,
            channel_mult,
            time_embed_dim,
            norm_groups: 8,
        }
    }

    pub fn depth(&self) -> usize {
        self.channel_mult.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return bad("channel counts and base width must be positive".into());
        }
        if self.channel_mult.is_empty() || self.channel_mult.contains(&0) {
            return bad(format!("channel_mult must be non-empty and positive, got {:?}", self.channel_mult));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return bad(format!("time_embed_dim must be even and >= 2, got {}", self.time_embed_dim));
        }
        if self.norm_groups == 0 {
            return bad("norm_groups must be positive".into());
        }
        Ok(())
    }

    /// Checks the channel layout against a `b`-bit joint model.
    pub fn check_joint(&self, bit_width: usize) -> Result<(), NnError> {
        let want = Self::joint(bit_width, self.base_width, self.channel_mult.clone(), self.time_embed_dim);
        if self.in_channels != want.in_channels || self.out_channels != want.out_channels {
            return Err(NnError::Config(format!(
                "denoiser has {} -> {} channels but a {bit_width}-bit joint model needs {} -> {}",
                self.in_channels, self.out_channels, want.in_channels, want.out_channels
            )));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_width * self.channel_mult[level]
    }
}

/// Sinusoidal embedding of integer steps, `(N, dim)`.
pub fn timestep_embedding<F: Scalar>(steps: &[usize], dim: usize) -> Tensor<F> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(steps.len() * dim);
    for &t in steps {
        let freqs = (0..half).map(|k| (-(10000f64.ln()) * k as f64 / half as f64).exp() * t as f64);
        let (s, c): (Vec<f64>, Vec<f64>) = freqs.map(|a| (a.sin(), a.cos())).unzip();
        out.extend(s.into_iter().chain(c).map(F::of));
    }
    Tensor::from_vec(&[steps.len(), dim], out)
}

#[derive(Debug, Clone)]
pub struct UNet {
    config: DenoiserConfig,
    time1: Linear,
    time2: Linear,
    conv_in: Conv2d,
    down_blocks: Vec<ResBlock>,
    downsample: Vec<Conv2d>,
    mid: [ResBlock; 2],
    up_blocks: Vec<ResBlock>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl UNet {
    /// Builds the layer graph and its freshly initialized parameters.
    pub fn build<F: Scalar>(config: &DenoiserConfig, seed: u64) -> Result<(Self, ParamStore<F>), NnError> {
        config.validate()?;
        let mut pb = ParamBuilder::new(seed);
        let e = config.time_embed_dim;
        let g = config.norm_groups;
        let levels = config.channel_mult.len();
        let block = |cin, cout| BlockSpec {
            cin,
            cout,
            temb: Some(e),
            groups: g,
        };
        let time1 = Linear::new(&mut pb, "time.0", e, e);
        let time2 = Linear::new(&mut pb, "time.1", e, e);
        let conv_in = Conv2d::new(&mut pb, "conv_in", config.in_channels, config.base_width, 3, 1, false);
        let mut down_blocks = Vec::new();
        let mut downsample = Vec::new();
        let mut cur = config.base_width;
        for l in 0..levels - 1 {
            let w = config.width(l);
            down_blocks.push(ResBlock::new(&mut pb, &format!("down.{l}.block"), block(cur, w)));
            downsample.push(Conv2d::new(&mut pb, &format!("down.{l}.sample"), w, config.width(l + 1), 3, 2, false));
            cur = config.width(l + 1);
        }
        let mid = [
            ResBlock::new(&mut pb, "mid.0", block(cur, cur)),
            ResBlock::new(&mut pb, "mid.1", block(cur, cur)),
        ];
        let mut up_blocks = Vec::new();
        for l in (0..levels - 1).rev() {
            let w = config.width(l);
            up_blocks.push(ResBlock::new(&mut pb, &format!("up.{l}.block"), block(cur + w, w)));
            cur = w;
        }
        let norm_out = GroupNorm::new(&mut pb, "norm_out", cur, g);
        let conv_out = Conv2d::new(&mut pb, "conv_out", cur, config.out_channels, 3, 1, true);
        let net = Self {
            config: config.clone(),
            time1,
            time2,
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

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    /// Predicts the noise for `(N, in_channels, H, W)` inputs at `steps`.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, x: Var, steps: &[usize]) -> Result<Var, NnError> {
        let shape = g.shape(x).to_vec();
        let k = 1usize << self.config.depth();
        match shape[..] {
            [n, c, h, w] if c == self.config.in_channels && n == steps.len() && h % k == 0 && w % k == 0 && h > 0 && w > 0 => {}
            _ => {
                return Err(NnError::Shape(format!(
                    "denoiser input {shape:?} with {} steps; expected (N, {}, H, W) with N = steps and H, W multiples of {k}",
                    steps.len(),
                    self.config.in_channels
                )))
            }
        }
        let emb = g.input(timestep_embedding(steps, self.config.time_embed_dim));
        let t = self.time1.forward(g, emb);
        let t = g.silu(t);
        let t = self.time2.forward(g, t);
        let t = g.silu(t);

        let mut h = self.conv_in.forward(g, x);
        let mut skips = Vec::new();
        for (blk, down) in self.down_blocks.iter().zip(&self.downsample) {
            h = blk.forward(g, h, Some(t));
            skips.push(h);
            h = down.forward(g, h);
        }
        for blk in &self.mid {
            h = blk.forward(g, h, Some(t));
        }
        for blk in &self.up_blocks {
            let skip = skips.pop().expect("one skip per level");
            h = g.upsample2(h);
            h = g.concat(h, skip);
            h = blk.forward(g, h, Some(t));
        }
        let h = self.norm_out.forward(g, h);
        let h = g.silu(h);
        Ok(self.conv_out.forward(g, h))
    }
}
