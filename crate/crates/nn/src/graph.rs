//! Define-by-run reverse-mode autodiff over [`Tensor`]s.
//!
//! Every op appends a node holding its output; [`Graph::backward`] walks the
//! tape in reverse. Inference graphs skip the caches backward needs.

use crate::{ParamId, ParamStore, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        cols: Vec<F>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    AddChannelBias {
        x: Var,
        bias: Var,
    },
    Concat(Var, Var),
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Silu(Var),
    Upsample2(Var),
    Mse {
        pred: Var,
        diff: Vec<F>,
    },
    CrossEntropy {
        logits: Var,
        probs: Vec<F>,
        labels: Vec<u8>,
        weights: Vec<F>,
        norm: F,
    },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

pub struct Graph<'s, F: Scalar> {
    store: &'s ParamStore<F>,
    nodes: Vec<Node<F>>,
    training: bool,
}

/// Parameter gradients from one backward pass, indexed like the store.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.data().iter())
            .map(|v| v.to_f64().unwrap_or(f64::NAN).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: F) {
        for g in self.grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Output columns `oj` whose input column `oj * stride + kj - pad` lies in `0..w`.
fn valid_range(w: usize, kj: usize, stride: usize, pad: usize, wo: usize) -> std::ops::Range<usize> {
    let lo = if pad > kj { (pad - kj).div_ceil(stride) } else { 0 };
    let hi = if w + pad > kj { ((w - 1 + pad - kj) / stride + 1).min(wo) } else { 0 };
    lo..hi.max(lo)
}

#[allow(clippy::too_many_arguments)]
fn im2col<F: Scalar>(x: &[F], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, cols: &mut [F]) {
    let (ho, wo) = (out_size(h, k, stride, pad), out_size(w, k, stride, pad));
    let p = ho * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            let rows = valid_range(h, ki, stride, pad, ho);
            for kj in 0..k {
                let cols_ok = valid_range(w, kj, stride, pad, wo);
                let row = &mut cols[((ci * k + ki) * k + kj) * p..][..p];
                for oi in 0..ho {
                    let dst = &mut row[oi * wo..(oi + 1) * wo];
                    if !rows.contains(&oi) {
                        dst.fill(F::zero());
                        continue;
                    }
                    let src = &plane[(oi * stride + ki - pad) * w..][..w];
                    dst[..cols_ok.start].fill(F::zero());
                    dst[cols_ok.end..].fill(F::zero());
                    let j0 = cols_ok.start * stride + kj - pad;
                    if stride == 1 {
                        dst[cols_ok.clone()].copy_from_slice(&src[j0..j0 + cols_ok.len()]);
                    } else {
                        for (t, d) in dst[cols_ok.clone()].iter_mut().enumerate() {
                            *d = src[j0 + t * stride];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<F: Scalar>(cols: &[F], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, dx: &mut [F]) {
    let (ho, wo) = (out_size(h, k, stride, pad), out_size(w, k, stride, pad));
    let p = ho * wo;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            let rows = valid_range(h, ki, stride, pad, ho);
            for kj in 0..k {
                let cols_ok = valid_range(w, kj, stride, pad, wo);
                let row = &cols[((ci * k + ki) * k + kj) * p..][..p];
                let j0 = cols_ok.start * stride + kj;
                for oi in rows.clone() {
                    let dst = &mut plane[(oi * stride + ki - pad) * w..][..w];
                    let src = &row[oi * wo + cols_ok.start..oi * wo + cols_ok.end];
                    for (t, &v) in src.iter().enumerate() {
                        dst[j0 + t * stride - pad] += v;
                    }
                }
            }
        }
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<'s, F: Scalar> Graph<'s, F> {
    pub fn new(store: &'s ParamStore<F>, training: bool) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            training,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Releases the tape, keeping only the value of `v`.
    pub fn take(mut self, v: Var) -> Tensor<F> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(&[0]))
    }

    pub fn input(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.store.get(id).clone();
        self.push(t, Op::Param(id))
    }

    /// Square-kernel 2-D convolution of `(N, Ci, H, W)` with `(Co, Ci, k, k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (n, ci, h, wd) = self.value(x).dims4();
        let (co, wci, k, k2) = self.value(w).dims4();
        assert!(wci == ci && k == k2, "conv weight {:?} does not fit input {:?}", self.shape(w), self.shape(x));
        let (ho, wo) = (out_size(h, k, stride, pad), out_size(wd, k, stride, pad));
        let (kk, p) = (ci * k * k, ho * wo);
        let direct = k == 1 && stride == 1 && pad == 0;
        let mut out = vec![F::zero(); n * co * p];
        let mut cols = if direct || !self.training { Vec::new() } else { vec![F::zero(); n * kk * p] };
        let mut scratch = if direct || self.training { Vec::new() } else { vec![F::zero(); kk * p] };
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            for i in 0..n {
                let xi = &xv[i * ci * h * wd..(i + 1) * ci * h * wd];
                let col: &[F] = if direct {
                    xi
                } else if self.training {
                    let c = &mut cols[i * kk * p..(i + 1) * kk * p];
                    im2col(xi, ci, h, wd, k, stride, pad, c);
                    c
                } else {
                    im2col(xi, ci, h, wd, k, stride, pad, &mut scratch);
                    &scratch
                };
                F::gemm(co, kk, p, wv, false, col, false, &mut out[i * co * p..(i + 1) * co * p], F::zero());
            }
            if let Some(b) = b {
                let bv = self.value(b).data();
                for (idx, chunk) in out.chunks_mut(p).enumerate() {
                    let bias = bv[idx % co];
                    chunk.iter_mut().for_each(|v| *v += bias);
                }
            }
        }
        let t = Tensor::from_vec(&[n, co, ho, wo], out);
        self.push(
            t,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            },
        )
    }

    /// `(N, in) x (out, in)^T + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, din) = self.value(x).dims2();
        let (dout, win) = self.value(w).dims2();
        assert_eq!(din, win, "linear weight does not fit input");
        let mut out = vec![F::zero(); n * dout];
        F::gemm(n, din, dout, self.value(x).data(), false, self.value(w).data(), true, &mut out, F::zero());
        let bv = self.value(b).data();
        for row in out.chunks_mut(dout) {
            for (o, &bb) in row.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        self.push(Tensor::from_vec(&[n, dout], out), Op::Linear { x, w, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add of mismatched shapes");
        let mut t = self.value(a).clone();
        t.add_assign(self.value(b));
        self.push(t, Op::Add(a, b))
    }

    /// Adds `bias[n, c]` to every pixel of channel `c` of item `n`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.shape(bias), &[n, c], "channel bias shape");
        let mut t = self.value(x).clone();
        let bv = self.value(bias).data();
        for (idx, chunk) in t.data_mut().chunks_mut(h * w).enumerate() {
            let v = bv[idx];
            chunk.iter_mut().for_each(|e| *e += v);
        }
        self.push(t, Op::AddChannelBias { x, bias })
    }

    /// Channel concatenation of two `(N, *, H, W)` tensors.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (n, ca, h, w) = self.value(a).dims4();
        let (nb, cb, hb, wb) = self.value(b).dims4();
        assert!(n == nb && h == hb && w == wb, "concat of {:?} and {:?}", self.shape(a), self.shape(b));
        let (sa, sb) = (ca * h * w, cb * h * w);
        let mut out = Vec::with_capacity(n * (sa + sb));
        for i in 0..n {
            out.extend_from_slice(&self.value(a).data()[i * sa..(i + 1) * sa]);
            out.extend_from_slice(&self.value(b).data()[i * sb..(i + 1) * sb]);
        }
        self.push(Tensor::from_vec(&[n, ca + cb, h, w], out), Op::Concat(a, b))
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        const EPS: f64 = 1e-5;
        let (n, c, h, w) = self.value(x).dims4();
        assert!(groups > 0 && c % groups == 0, "{c} channels not divisible into {groups} groups");
        let m = (c / groups) * h * w;
        let hw = h * w;
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![F::zero(); xv.len()];
        let mut xhat_all = if self.training { vec![F::zero(); xv.len()] } else { Vec::new() };
        let mut rstd_all = Vec::with_capacity(n * groups);
        let mf = F::of(m as f64);
        let cg = c / groups;
        for (gi, seg) in xv.chunks(m).enumerate() {
            let mean = seg.iter().copied().sum::<F>() / mf;
            let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / mf;
            let rstd = F::one() / (var + F::of(EPS)).sqrt();
            rstd_all.push(rstd);
            for (cc, xs) in seg.chunks(hw).enumerate() {
                let ch = (gi % groups) * cg + cc;
                let base = gi * m + cc * hw;
                let (ga, be) = (gv[ch], bv[ch]);
                for (k, &v) in xs.iter().enumerate() {
                    let xh = (v - mean) * rstd;
                    out[base + k] = xh * ga + be;
                    if self.training {
                        xhat_all[base + k] = xh;
                    }
                }
            }
        }
        let t = Tensor::from_vec(&[n, c, h, w], out);
        self.push(
            t,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat: xhat_all,
                rstd: rstd_all,
            },
        )
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let mut t = self.value(x).clone();
        t.data_mut().iter_mut().for_each(|v| *v = *v * sigmoid(*v));
        self.push(t, Op::Silu(x))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let xv = self.value(x).data();
        let mut out = vec![F::zero(); n * c * 4 * h * w];
        for (plane, src) in xv.chunks(h * w).enumerate() {
            let dst = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
            for i in 0..2 * h {
                for j in 0..2 * w {
                    dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
                }
            }
        }
        self.push(Tensor::from_vec(&[n, c, 2 * h, 2 * w], out), Op::Upsample2(x))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor<F>) -> Var {
        assert_eq!(self.shape(pred), target.shape(), "mse target shape");
        let diff: Vec<F> = self.value(pred).data().iter().zip(target.data()).map(|(&a, &b)| a - b).collect();
        let loss = diff.iter().map(|&d| d * d).sum::<F>() / F::of(diff.len().max(1) as f64);
        self.push(Tensor::scalar(loss), Op::Mse { pred, diff })
    }

    /// Class-weighted softmax cross-entropy over the channel axis of
    /// `(N, C, H, W)` logits; `labels` are `(N, H, W)` indices in `0..C`.
    /// The loss is normalized by the summed weight of all pixels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[u8], weights: Option<&[F]>) -> Var {
        let (n, c, h, w) = self.value(logits).dims4();
        assert_eq!(labels.len(), n * h * w, "label count");
        let weights: Vec<F> = match weights {
            Some(ws) => {
                assert_eq!(ws.len(), c, "one weight per class");
                ws.to_vec()
            }
            None => vec![F::one(); c],
        };
        let hw = h * w;
        let lv = self.value(logits).data();
        let mut probs = vec![F::zero(); lv.len()];
        let (mut total, mut norm) = (F::zero(), F::zero());
        for i in 0..n {
            for p in 0..hw {
                let at = |k: usize| i * c * hw + k * hw + p;
                let mx = (0..c).map(|k| lv[at(k)]).fold(F::neg_infinity(), F::max);
                let z: F = (0..c).map(|k| (lv[at(k)] - mx).exp()).sum();
                for k in 0..c {
                    probs[at(k)] = (lv[at(k)] - mx).exp() / z;
                }
                let y = labels[i * hw + p] as usize;
                assert!(y < c, "label {y} out of range for {c} classes");
                let wy = weights[y];
                total += wy * (z.ln() + mx - lv[at(y)]);
                norm += wy;
            }
        }
        let norm = if norm > F::zero() { norm } else { F::one() };
        self.push(
            Tensor::scalar(total / norm),
            Op::CrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
                weights,
                norm,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every parameter used.
    pub fn backward(&self, loss: Var) -> Gradients<F> {
        assert!(self.training, "backward on an inference graph");
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(F::one()));
        let mut params: Vec<Option<Tensor<F>>> = (0..self.store.len()).map(|_| None).collect();

        fn acc<F: Scalar>(slot: &mut Option<Tensor<F>>, g: Tensor<F>) {
            match slot {
                Some(t) => t.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => acc(&mut params[id.0], dy),
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], dy.clone());
                    acc(&mut grads[b.0], dy);
                }
                Op::AddChannelBias { x, bias } => {
                    let (n, c, h, w) = dy.dims4();
                    let db: Vec<F> = dy.data().chunks(h * w).map(|ch| ch.iter().copied().sum()).collect();
                    acc(&mut grads[bias.0], Tensor::from_vec(&[n, c], db));
                    acc(&mut grads[x.0], dy);
                }
                Op::Concat(a, b) => {
                    let (n, ca, h, w) = self.value(*a).dims4();
                    let cb = self.value(*b).dims4().1;
                    let (sa, sb) = (ca * h * w, cb * h * w);
                    let mut ga = Vec::with_capacity(n * sa);
                    let mut gb = Vec::with_capacity(n * sb);
                    for item in dy.data().chunks(sa + sb) {
                        ga.extend_from_slice(&item[..sa]);
                        gb.extend_from_slice(&item[sa..]);
                    }
                    acc(&mut grads[a.0], Tensor::from_vec(&[n, ca, h, w], ga));
                    acc(&mut grads[b.0], Tensor::from_vec(&[n, cb, h, w], gb));
                }
                Op::Silu(x) => {
                    let xv = self.value(*x);
                    let g: Vec<F> = xv
                        .data()
                        .iter()
                        .zip(dy.data())
                        .map(|(&v, &d)| {
                            let s = sigmoid(v);
                            d * (s + v * s * (F::one() - s))
                        })
                        .collect();
                    acc(&mut grads[x.0], Tensor::from_vec(xv.shape(), g));
                }
                Op::Upsample2(x) => {
                    let (n, c, h, w) = self.value(*x).dims4();
                    let mut g = vec![F::zero(); n * c * h * w];
                    for (plane, src) in dy.data().chunks(4 * h * w).enumerate() {
                        let dst = &mut g[plane * h * w..(plane + 1) * h * w];
                        for i in 0..2 * h {
                            for j in 0..2 * w {
                                dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
                            }
                        }
                    }
                    acc(&mut grads[x.0], Tensor::from_vec(&[n, c, h, w], g));
                }
                Op::Mse { pred, diff } => {
                    let s = dy.item() * F::of(2.0) / F::of(diff.len().max(1) as f64);
                    let g = diff.iter().map(|&d| d * s).collect();
                    acc(&mut grads[pred.0], Tensor::from_vec(self.shape(*pred), g));
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    labels,
                    weights,
                    norm,
                } => {
                    let (n, c, h, w) = self.value(*logits).dims4();
                    let hw = h * w;
                    let s = dy.item() / *norm;
                    let mut g = probs.clone();
                    for i in 0..n {
                        for p in 0..hw {
                            let y = labels[i * hw + p] as usize;
                            let wy = weights[y] * s;
                            for k in 0..c {
                                let at = i * c * hw + k * hw + p;
                                g[at] *= wy;
                                if k == y {
                                    g[at] -= wy;
                                }
                            }
                        }
                    }
                    acc(&mut grads[logits.0], Tensor::from_vec(&[n, c, h, w], g));
                }
                Op::Linear { x, w, b } => {
                    let (n, din) = self.value(*x).dims2();
                    let dout = self.value(*w).dims2().0;
                    let mut dx = vec![F::zero(); n * din];
                    F::gemm(n, dout, din, dy.data(), false, self.value(*w).data(), false, &mut dx, F::zero());
                    let mut dw = vec![F::zero(); dout * din];
                    F::gemm(dout, n, din, dy.data(), true, self.value(*x).data(), false, &mut dw, F::zero());
                    let mut db = vec![F::zero(); dout];
                    for row in dy.data().chunks(dout) {
                        for (a, &v) in db.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    acc(&mut grads[x.0], Tensor::from_vec(&[n, din], dx));
                    acc(&mut grads[w.0], Tensor::from_vec(&[dout, din], dw));
                    acc(&mut grads[b.0], Tensor::from_vec(&[dout], db));
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    xhat,
                    rstd,
                } => {
                    let (n, c, h, w) = self.value(*x).dims4();
                    let hw = h * w;
                    let m = (c / groups) * hw;
                    let gv = self.value(*gamma).data();
                    let mut dgamma = vec![F::zero(); c];
                    let mut dbeta = vec![F::zero(); c];
                    let mut dx = vec![F::zero(); n * c * hw];
                    let mf = F::of(m as f64);
                    let cg = c / groups;
                    for gi in 0..n * groups {
                        let (mut s1, mut s2) = (F::zero(), F::zero());
                        for cc in 0..cg {
                            let ch = (gi % groups) * cg + cc;
                            let base = gi * m + cc * hw;
                            let (mut dg, mut db) = (F::zero(), F::zero());
                            for (&d, &xh) in dy.data()[base..base + hw].iter().zip(&xhat[base..base + hw]) {
                                dg += d * xh;
                                db += d;
                            }
                            dgamma[ch] += dg;
                            dbeta[ch] += db;
                            s1 += db * gv[ch];
                            s2 += dg * gv[ch];
                        }
                        let (m1, m2) = (s1 / mf, s2 / mf);
                        let r = rstd[gi];
                        for cc in 0..cg {
                            let ch = (gi % groups) * cg + cc;
                            let base = gi * m + cc * hw;
                            let ga = gv[ch];
                            for k in base..base + hw {
                                dx[k] = r * (dy.data()[k] * ga - m1 - xhat[k] * m2);
                            }
                        }
                    }
                    acc(&mut grads[x.0], Tensor::from_vec(&[n, c, h, w], dx));
                    acc(&mut grads[gamma.0], Tensor::from_vec(&[c], dgamma));
                    acc(&mut grads[beta.0], Tensor::from_vec(&[c], dbeta));
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                    cols,
                } => {
                    let (n, ci, h, wd) = self.value(*x).dims4();
                    let (co, _, k, _) = self.value(*w).dims4();
                    let (_, _, ho, wo) = dy.dims4();
                    let (kk, p) = (ci * k * k, ho * wo);
                    let direct = cols.is_empty();
                    let xv = self.value(*x).data();
                    let wv = self.value(*w).data();
                    let mut dw = vec![F::zero(); co * kk];
                    let mut dx = vec![F::zero(); n * ci * h * wd];
                    let mut dcols = vec![F::zero(); kk * p];
                    for i in 0..n {
                        let dyi = &dy.data()[i * co * p..(i + 1) * co * p];
                        let col = if direct { &xv[i * kk * p..(i + 1) * kk * p] } else { &cols[i * kk * p..(i + 1) * kk * p] };
                        F::gemm(co, p, kk, dyi, false, col, true, &mut dw, F::one());
                        let dxi = &mut dx[i * ci * h * wd..(i + 1) * ci * h * wd];
                        if direct {
                            F::gemm(kk, co, p, wv, true, dyi, false, dxi, F::zero());
                        } else {
                            F::gemm(kk, co, p, wv, true, dyi, false, &mut dcols, F::zero());
                            col2im(&dcols, ci, h, wd, k, *stride, *pad, dxi);
                        }
                    }
                    if let Some(b) = b {
                        let mut db = vec![F::zero(); co];
                        for (idx, chunk) in dy.data().chunks(p).enumerate() {
                            db[idx % co] += chunk.iter().copied().sum::<F>();
                        }
                        acc(&mut grads[b.0], Tensor::from_vec(&[co], db));
                    }
                    acc(&mut grads[x.0], Tensor::from_vec(&[n, ci, h, wd], dx));
                    acc(&mut grads[w.0], Tensor::from_vec(&[co, ci, k, k], dw));
                }
            }
        }
        Gradients { grads: params }
    }
}
