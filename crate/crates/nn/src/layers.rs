use serde::{Deserialize, Serialize};

use crate::{Graph, ParamBuilder, ParamId, Scalar, Var};

#[derive(Debug, Clone)]
pub struct Conv2d {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv2d {
    /// Square `k x k` kernel with "same" padding at stride 1.
    pub fn new<F: Scalar>(pb: &mut ParamBuilder<F>, name: &str, cin: usize, cout: usize, k: usize, stride: usize, zero: bool) -> Self {
        let shape = [cout, cin, k, k];
        let w = if zero {
            pb.constant(format!("{name}.weight"), &shape, 0.0)
        } else {
            pb.uniform(format!("{name}.weight"), &shape, cin * k * k)
        };
        let b = if zero {
            pb.constant(format!("{name}.bias"), &[cout], 0.0)
        } else {
            pb.uniform(format!("{name}.bias"), &[cout], cin * k * k)
        };
        Self { w, b, stride, pad: k / 2 }
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, x: Var) -> Var {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new<F: Scalar>(pb: &mut ParamBuilder<F>, name: &str, din: usize, dout: usize) -> Self {
        Self {
            w: pb.uniform(format!("{name}.weight"), &[dout, din], din),
            b: pb.uniform(format!("{name}.bias"), &[dout], din),
        }
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, x: Var) -> Var {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.linear(x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    gamma: ParamId,
    beta: ParamId,
    groups: usize,
}

/// Largest divisor of `channels` not above `max_groups`.
pub fn group_count(channels: usize, max_groups: usize) -> usize {
    (1..=max_groups.min(channels).max(1)).rev().find(|g| channels % g == 0).unwrap_or(1)
}

impl GroupNorm {
    pub fn new<F: Scalar>(pb: &mut ParamBuilder<F>, name: &str, channels: usize, max_groups: usize) -> Self {
        Self {
            gamma: pb.constant(format!("{name}.gamma"), &[channels], 1.0),
            beta: pb.constant(format!("{name}.beta"), &[channels], 0.0),
            groups: group_count(channels, max_groups),
        }
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, x: Var) -> Var {
        let (gm, bt) = (g.param(self.gamma), g.param(self.beta));
        g.group_norm(x, gm, bt, self.groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub cin: usize,
    pub cout: usize,
    pub temb: Option<usize>,
    pub groups: usize,
}

/// Pre-activation residual block: `GN, SiLU, conv, (+ time), GN, SiLU, conv`
/// plus a 1x1 shortcut when the width changes. The second conv starts at
/// zero so a fresh block is the identity on its shortcut.
#[derive(Debug, Clone)]
pub struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    time: Option<Linear>,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    pub fn new<F: Scalar>(pb: &mut ParamBuilder<F>, name: &str, spec: BlockSpec) -> Self {
        let BlockSpec { cin, cout, temb, groups } = spec;
        Self {
            norm1: GroupNorm::new(pb, &format!("{name}.norm1"), cin, groups),
            conv1: Conv2d::new(pb, &format!("{name}.conv1"), cin, cout, 3, 1, false),
            time: temb.map(|e| Linear::new(pb, &format!("{name}.time"), e, cout)),
            norm2: GroupNorm::new(pb, &format!("{name}.norm2"), cout, groups),
            conv2: Conv2d::new(pb, &format!("{name}.conv2"), cout, cout, 3, 1, true),
            skip: (cin != cout).then(|| Conv2d::new(pb, &format!("{name}.skip"), cin, cout, 1, 1, false)),
        }
    }

    /// `temb_act` is the already activated time embedding `(N, E)`.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, x: Var, temb_act: Option<Var>) -> Var {
        let h = self.norm1.forward(g, x);
        let h = g.silu(h);
        let mut h = self.conv1.forward(g, h);
        if let (Some(lin), Some(t)) = (&self.time, temb_act) {
            let proj = lin.forward(g, t);
            h = g.add_channel_bias(h, proj);
        }
        let h = self.norm2.forward(g, h);
        let h = g.silu(h);
        let h = self.conv2.forward(g, h);
        let short = match &self.skip {
            Some(c) => c.forward(g, x),
            None => x,
        };
        g.add(h, short)
    }
}
