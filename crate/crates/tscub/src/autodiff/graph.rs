//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Each forward call appends a node holding the computed value plus whatever
//! the backward pass needs (im2col buffers, pool argmax indices, softmax
//! probabilities). `backward` walks the tape in reverse and accumulates
//! parameter gradients into the owning [`ParamStore`]. Every op validates
//! shapes and rejects non-finite outputs.

use rayon::prelude::*;

use crate::autodiff::linalg;
use crate::autodiff::params::ParamStore;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    stride: usize,
    h_out: usize,
    w_out: usize,
}

impl ConvDims {
    fn ckk(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_hw(&self) -> usize {
        self.h_out * self.w_out
    }
}

#[derive(Debug, Clone, Copy)]
struct PoolDims {
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    h_out: usize,
    w_out: usize,
}

enum Op {
    Input,
    Param {
        slot: usize,
    },
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        dims: ConvDims,
        cols: Vec<f64>,
    },
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    },
    PRelu {
        input: NodeId,
        slope: NodeId,
    },
    MaxPool2d {
        input: NodeId,
        dims: PoolDims,
        argmax: Vec<u32>,
    },
    ConcatChannels {
        a: NodeId,
        b: NodeId,
    },
    Reshape {
        input: NodeId,
    },
    MaxElem {
        a: NodeId,
        b: NodeId,
    },
    MulConst {
        input: NodeId,
        factor: Tensor,
    },
    Scale {
        input: NodeId,
        factor: f64,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        mask: Vec<bool>,
        active: usize,
        probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    needs_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, needs_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant leaf (no gradient flows into it).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, false, Op::Input)
    }

    /// Leaf bound to a named parameter; gradients accumulate into the store.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        let slot = store.slot(name)?;
        let value = store.value_by_slot(slot).clone();
        Ok(self.push(value, true, Op::Param { slot }))
    }

    /// 2-d cross-correlation of `input` `[B,C,H,W]` with `weight`
    /// `[O,C,KH,KW]`, zero padding and a square stride.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        pad: usize,
        stride: usize,
    ) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("input {xs:?} vs weight {ws:?}"),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        let (h, w) = (xs[2], xs[3]);
        let (kh, kw) = (ws[2], ws[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})"),
            });
        }
        let dims = ConvDims {
            batch: xs[0],
            c_in: xs[1],
            h,
            w,
            c_out: ws[0],
            kh,
            kw,
            pad,
            stride,
            h_out: (h + 2 * pad - kh) / stride + 1,
            w_out: (w + 2 * pad - kw) / stride + 1,
        };
        if let Some(b) = bias {
            let bs = self.value(b).shape();
            if bs != [dims.c_out] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("bias {bs:?} vs {} output channels", dims.c_out),
                });
            }
        }

        let ckk = dims.ckk();
        let hw = dims.out_hw();
        let mut cols = vec![0.0; dims.batch * ckk * hw];
        let mut out = Tensor::zeros(&[dims.batch, dims.c_out, dims.h_out, dims.w_out]);
        {
            let x = self.value(input).data();
            let wmat = self.value(weight).data();
            let bvec = bias.map(|b| self.value(b).data().to_vec());
            let in_stride = dims.c_in * dims.h * dims.w;
            out.data_mut()
                .par_chunks_mut(dims.c_out * hw)
                .zip(cols.par_chunks_mut(ckk * hw))
                .enumerate()
                .for_each(|(s, (out_s, col_s))| {
                    im2col(&x[s * in_stride..(s + 1) * in_stride], &dims, col_s);
                    linalg::gemm(dims.c_out, ckk, hw, wmat, col_s, 0.0, out_s);
                    if let Some(bv) = &bvec {
                        for (o, &b) in bv.iter().enumerate() {
                            for v in &mut out_s[o * hw..(o + 1) * hw] {
                                *v += b;
                            }
                        }
                    }
                });
        }
        out.check_finite("conv2d")?;
        let needs =
            self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            out,
            needs,
            Op::Conv2d {
                input,
                weight,
                bias,
                dims,
                cols,
            },
        ))
    }

    /// Affine map of `input` `[B,I]` by `weight` `[I,O]` plus `bias` `[O]`.
    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::ShapeMismatch {
                op: "dense",
                detail: format!("input {xs:?} vs weight {ws:?}"),
            });
        }
        let (b, i, o) = (xs[0], xs[1], ws[1]);
        if let Some(bn) = bias {
            if self.value(bn).shape() != [o] {
                return Err(Error::ShapeMismatch {
                    op: "dense",
                    detail: format!("bias {:?} vs {o} outputs", self.value(bn).shape()),
                });
            }
        }
        let mut out = Tensor::zeros(&[b, o]);
        linalg::gemm(
            b,
            i,
            o,
            self.value(input).data(),
            self.value(weight).data(),
            0.0,
            out.data_mut(),
        );
        if let Some(bn) = bias {
            let bv = self.value(bn).data().to_vec();
            for row in out.data_mut().chunks_mut(o) {
                for (v, &add) in row.iter_mut().zip(&bv) {
                    *v += add;
                }
            }
        }
        out.check_finite("dense")?;
        let needs =
            self.needs(input) || self.needs(weight) || bias.is_some_and(|bn| self.needs(bn));
        Ok(self.push(
            out,
            needs,
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Parametric ReLU with one slope per channel (dim 1).
    pub fn prelu(&mut self, input: NodeId, slope: NodeId) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        let channels = if xs.len() >= 2 { xs[1] } else { xs[0] };
        if self.value(slope).shape() != [channels] {
            return Err(Error::ShapeMismatch {
                op: "prelu",
                detail: format!(
                    "slope {:?} vs {channels} channels of {xs:?}",
                    self.value(slope).shape()
                ),
            });
        }
        let inner: usize = xs.iter().skip(2).product();
        let mut out = self.value(input).clone();
        {
            let slopes = self.value(slope).data().to_vec();
            for (idx, v) in out.data_mut().iter_mut().enumerate() {
                if *v < 0.0 {
                    *v *= slopes[(idx / inner.max(1)) % channels];
                }
            }
        }
        out.check_finite("prelu")?;
        let needs = self.needs(input) || self.needs(slope);
        Ok(self.push(out, needs, Op::PRelu { input, slope }))
    }

    /// Max pooling over `[B,C,H,W]`; gradient routes to the first maximal
    /// element of each window.
    pub fn maxpool2d(
        &mut self,
        input: NodeId,
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "maxpool2d",
                detail: format!("expected 4-d input, got {xs:?}"),
            });
        }
        let (wh, ww) = window;
        let (sh, sw) = stride;
        if wh == 0 || ww == 0 || sh == 0 || sw == 0 || wh > xs[2] || ww > xs[3] {
            return Err(Error::InvalidArgument(format!(
                "maxpool2d window {window:?} / stride {stride:?} invalid for input {xs:?}"
            )));
        }
        let dims = PoolDims {
            batch: xs[0],
            channels: xs[1],
            h: xs[2],
            w: xs[3],
            h_out: (xs[2] - wh) / sh + 1,
            w_out: (xs[3] - ww) / sw + 1,
        };
        let mut out = Tensor::zeros(&[dims.batch, dims.channels, dims.h_out, dims.w_out]);
        let mut argmax = vec![0u32; out.numel()];
        {
            let x = self.value(input).data();
            let plane = dims.h * dims.w;
            for ((v, am), idx) in out
                .data_mut()
                .iter_mut()
                .zip(argmax.iter_mut())
                .zip(0..)
            {
                let ow = idx % dims.w_out;
                let oh = (idx / dims.w_out) % dims.h_out;
                let c = (idx / (dims.w_out * dims.h_out)) % dims.channels;
                let b = idx / (dims.w_out * dims.h_out * dims.channels);
                let base = (b * dims.channels + c) * plane;
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for kh in 0..wh {
                    let row = oh * sh + kh;
                    for kw in 0..ww {
                        let col = ow * sw + kw;
                        let i = base + row * dims.w + col;
                        if x[i] > best {
                            best = x[i];
                            best_idx = i;
                        }
                    }
                }
                *v = best;
                *am = best_idx as u32;
            }
        }
        out.check_finite("maxpool2d")?;
        let needs = self.needs(input);
        Ok(self.push(out, needs, Op::MaxPool2d { input, dims, argmax }))
    }

    /// Concatenate two `[B,C,H,W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sa.len() != 4
            || sb.len() != 4
            || sa[0] != sb[0]
            || sa[2] != sb[2]
            || sa[3] != sb[3]
        {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                detail: format!("{sa:?} vs {sb:?}"),
            });
        }
        let mut out = Tensor::zeros(&[sa[0], sa[1] + sb[1], sa[2], sa[3]]);
        let plane = sa[2] * sa[3];
        let (ca, cb) = (sa[1], sb[1]);
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            let dst = out.data_mut();
            for s in 0..sa[0] {
                let d0 = s * (ca + cb) * plane;
                dst[d0..d0 + ca * plane]
                    .copy_from_slice(&av[s * ca * plane..(s + 1) * ca * plane]);
                dst[d0 + ca * plane..d0 + (ca + cb) * plane]
                    .copy_from_slice(&bv[s * cb * plane..(s + 1) * cb * plane]);
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, needs, Op::ConcatChannels { a, b }))
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(input).reshaped(shape)?;
        let needs = self.needs(input);
        Ok(self.push(out, needs, Op::Reshape { input }))
    }

    /// Element-wise maximum; ties route the gradient to `a`.
    pub fn max_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "max_elem",
                detail: format!(
                    "{:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            });
        }
        let mut out = self.value(a).clone();
        for (v, &bv) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            if bv > *v {
                *v = bv;
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, needs, Op::MaxElem { a, b }))
    }

    /// Element-wise product with a constant tensor (dropout masks).
    pub fn mul_const(&mut self, input: NodeId, factor: Tensor) -> Result<NodeId> {
        if self.value(input).shape() != factor.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul_const",
                detail: format!(
                    "{:?} vs {:?}",
                    self.value(input).shape(),
                    factor.shape()
                ),
            });
        }
        let mut out = self.value(input).clone();
        for (v, &f) in out.data_mut().iter_mut().zip(factor.data()) {
            *v *= f;
        }
        out.check_finite("mul_const")?;
        let needs = self.needs(input);
        Ok(self.push(out, needs, Op::MulConst { input, factor }))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> Result<NodeId> {
        let mut out = self.value(input).clone();
        out.scale_in_place(factor);
        out.check_finite("scale")?;
        let needs = self.needs(input);
        Ok(self.push(out, needs, Op::Scale { input, factor }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                detail: format!(
                    "{:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            });
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        out.check_finite("add")?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, needs, Op::Add { a, b }))
    }

    /// Mean cross-entropy over the rows of `logits` `[B,C]` selected by
    /// `mask`, stabilized by row-max subtraction. Returns the scalar loss
    /// node and the softmax scores of every row.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<(NodeId, Tensor)> {
        let ls = self.value(logits).shape().to_vec();
        if ls.len() != 2 || labels.len() != ls[0] || mask.len() != ls[0] {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                detail: format!(
                    "logits {ls:?}, {} labels, {} mask entries",
                    labels.len(),
                    mask.len()
                ),
            });
        }
        let (b, c) = (ls[0], ls[1]);
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::InvalidArgument(
                "softmax_cross_entropy: no active rows in mask".into(),
            ));
        }
        for (row, (&label, &m)) in labels.iter().zip(mask).enumerate() {
            if m && label >= c {
                return Err(Error::InvalidArgument(format!(
                    "label {label} out of range for {c} classes (row {row})"
                )));
            }
        }
        let mut probs = Tensor::zeros(&[b, c]);
        let mut loss = 0.0;
        {
            let z = self.value(logits).data();
            let p = probs.data_mut();
            for row in 0..b {
                let zrow = &z[row * c..(row + 1) * c];
                let zmax = zrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for (j, &zj) in zrow.iter().enumerate() {
                    let e = (zj - zmax).exp();
                    p[row * c + j] = e;
                    denom += e;
                }
                for v in &mut p[row * c..(row + 1) * c] {
                    *v /= denom;
                }
                if mask[row] {
                    loss += denom.ln() - (zrow[labels[row]] - zmax);
                }
            }
        }
        loss /= active as f64;
        let value = Tensor::scalar(loss);
        value.check_finite("softmax_cross_entropy")?;
        let needs = self.needs(logits);
        let node = self.push(
            value,
            needs,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
                active,
                probs: probs.clone(),
            },
        );
        Ok((node, probs))
    }

    /// Reverse pass from a scalar `loss` node; parameter gradients are
    /// accumulated into `store`.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::InvalidArgument(
                "backward requires a scalar loss node".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param { slot } => store.accumulate_grad(*slot, &g),
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    dims,
                    cols,
                } => self.backward_conv2d(&mut grads, g, *input, *weight, *bias, dims, cols),
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => self.backward_dense(&mut grads, g, *input, *weight, *bias),
                Op::PRelu { input, slope } => {
                    self.backward_prelu(&mut grads, g, *input, *slope);
                }
                Op::MaxPool2d { input, dims, argmax } => {
                    if self.needs(*input) {
                        let mut gi = Tensor::zeros(&[dims.batch, dims.channels, dims.h, dims.w]);
                        for (&am, &gv) in argmax.iter().zip(g.data()) {
                            gi.data_mut()[am as usize] += gv;
                        }
                        accumulate(&mut grads, *input, gi);
                    }
                }
                Op::ConcatChannels { a, b } => {
                    let sa = self.value(*a).shape().to_vec();
                    let sb = self.value(*b).shape().to_vec();
                    let plane = sa[2] * sa[3];
                    let (ca, cb) = (sa[1], sb[1]);
                    if self.needs(*a) {
                        let mut ga = Tensor::zeros(&sa);
                        for s in 0..sa[0] {
                            let src = s * (ca + cb) * plane;
                            ga.data_mut()[s * ca * plane..(s + 1) * ca * plane]
                                .copy_from_slice(&g.data()[src..src + ca * plane]);
                        }
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let mut gb = Tensor::zeros(&sb);
                        for s in 0..sb[0] {
                            let src = s * (ca + cb) * plane + ca * plane;
                            gb.data_mut()[s * cb * plane..(s + 1) * cb * plane]
                                .copy_from_slice(&g.data()[src..src + cb * plane]);
                        }
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Reshape { input } => {
                    if self.needs(*input) {
                        let gi = g.reshaped(self.value(*input).shape()).expect("same numel");
                        accumulate(&mut grads, *input, gi);
                    }
                }
                Op::MaxElem { a, b } => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    if self.needs(*a) {
                        let mut ga = g.clone();
                        for (gv, (&x, &y)) in ga.data_mut().iter_mut().zip(av.iter().zip(bv)) {
                            if y > x {
                                *gv = 0.0;
                            }
                        }
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let mut gb = g.clone();
                        for (gv, (&x, &y)) in gb.data_mut().iter_mut().zip(av.iter().zip(bv)) {
                            if y <= x {
                                *gv = 0.0;
                            }
                        }
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::MulConst { input, factor } => {
                    if self.needs(*input) {
                        let mut gi = g.clone();
                        for (gv, &f) in gi.data_mut().iter_mut().zip(factor.data()) {
                            *gv *= f;
                        }
                        accumulate(&mut grads, *input, gi);
                    }
                }
                Op::Scale { input, factor } => {
                    if self.needs(*input) {
                        let mut gi = g.clone();
                        gi.scale_in_place(*factor);
                        accumulate(&mut grads, *input, gi);
                    }
                }
                Op::Add { a, b } => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    mask,
                    active,
                    probs,
                } => {
                    if self.needs(*logits) {
                        let upstream = g.item();
                        let c = probs.shape()[1];
                        let mut gl = Tensor::zeros(probs.shape());
                        let scale = upstream / *active as f64;
                        for (row, (&label, &m)) in labels.iter().zip(mask).enumerate() {
                            if !m {
                                continue;
                            }
                            for j in 0..c {
                                let onehot = f64::from(j == label);
                                gl.data_mut()[row * c + j] =
                                    scale * (probs.data()[row * c + j] - onehot);
                            }
                        }
                        accumulate(&mut grads, *logits, gl);
                    }
                }
            }
        }
        Ok(())
    }

    fn backward_conv2d(
        &self,
        grads: &mut [Option<Tensor>],
        g: Tensor,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        dims: &ConvDims,
        cols: &[f64],
    ) {
        let ckk = dims.ckk();
        let hw = dims.out_hw();
        let wmat = self.value(weight).data();

        if self.needs(weight) {
            // Per-sample partials, reduced in sample order.
            let partials: Vec<Vec<f64>> = g
                .data()
                .par_chunks(dims.c_out * hw)
                .zip(cols.par_chunks(ckk * hw))
                .map(|(gy, col)| {
                    let mut dw = vec![0.0; dims.c_out * ckk];
                    linalg::gemm_nt(dims.c_out, hw, ckk, gy, col, 0.0, &mut dw);
                    dw
                })
                .collect();
            let mut dw = Tensor::zeros(self.value(weight).shape());
            for p in partials {
                for (d, s) in dw.data_mut().iter_mut().zip(&p) {
                    *d += s;
                }
            }
            accumulate(grads, weight, dw);
        }

        if let Some(b) = bias {
            if self.needs(b) {
                let mut db = Tensor::zeros(&[dims.c_out]);
                for gy in g.data().chunks(dims.c_out * hw) {
                    for (o, dv) in db.data_mut().iter_mut().enumerate() {
                        *dv += gy[o * hw..(o + 1) * hw].iter().sum::<f64>();
                    }
                }
                accumulate(grads, b, db);
            }
        }

        if self.needs(input) {
            let mut gx = Tensor::zeros(&[dims.batch, dims.c_in, dims.h, dims.w]);
            let in_stride = dims.c_in * dims.h * dims.w;
            gx.data_mut()
                .par_chunks_mut(in_stride)
                .zip(g.data().par_chunks(dims.c_out * hw))
                .for_each(|(gx_s, gy_s)| {
                    let mut gcol = vec![0.0; ckk * hw];
                    // wmat is stored [c_out, ckk]; treat as [k, m] for the
                    // transposed product.
                    linalg::gemm_tn(ckk, dims.c_out, hw, wmat, gy_s, 0.0, &mut gcol);
                    col2im(&gcol, dims, gx_s);
                });
            accumulate(grads, input, gx);
        }
    }

    fn backward_dense(
        &self,
        grads: &mut [Option<Tensor>],
        g: Tensor,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    ) {
        let xs = self.value(input).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        let (b, i, o) = (xs[0], xs[1], ws[1]);
        if self.needs(weight) {
            let mut dw = Tensor::zeros(&ws);
            linalg::par_gemm_tn(
                i,
                b,
                o,
                self.value(input).data(),
                g.data(),
                dw.data_mut(),
            );
            accumulate(grads, weight, dw);
        }
        if let Some(bn) = bias {
            if self.needs(bn) {
                let mut db = Tensor::zeros(&[o]);
                for row in g.data().chunks(o) {
                    for (dv, &gv) in db.data_mut().iter_mut().zip(row) {
                        *dv += gv;
                    }
                }
                accumulate(grads, bn, db);
            }
        }
        if self.needs(input) {
            let mut dx = Tensor::zeros(&xs);
            linalg::gemm_nt(
                b,
                o,
                i,
                g.data(),
                self.value(weight).data(),
                0.0,
                dx.data_mut(),
            );
            accumulate(grads, input, dx);
        }
    }

    fn backward_prelu(&self, grads: &mut [Option<Tensor>], g: Tensor, input: NodeId, slope: NodeId) {
        let xs = self.value(input).shape().to_vec();
        let channels = if xs.len() >= 2 { xs[1] } else { xs[0] };
        let inner: usize = xs.iter().skip(2).product::<usize>().max(1);
        let x = self.value(input).data();
        let slopes = self.value(slope).data();

        if self.needs(input) {
            let mut gi = g.clone();
            for (idx, gv) in gi.data_mut().iter_mut().enumerate() {
                if x[idx] < 0.0 {
                    *gv *= slopes[(idx / inner) % channels];
                }
            }
            accumulate(grads, input, gi);
        }
        if self.needs(slope) {
            let mut gs = Tensor::zeros(&[channels]);
            for (idx, (&gv, &xv)) in g.data().iter().zip(x).enumerate() {
                if xv < 0.0 {
                    gs.data_mut()[(idx / inner) % channels] += gv * xv;
                }
            }
            accumulate(grads, slope, gs);
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(t) => t.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// Expand one sample `[C,H,W]` into `[C*KH*KW, H_out*W_out]` columns.
fn im2col(x: &[f64], d: &ConvDims, col: &mut [f64]) {
    let hw = d.out_hw();
    for c in 0..d.c_in {
        for kh in 0..d.kh {
            for kw in 0..d.kw {
                let row = (c * d.kh + kh) * d.kw + kw;
                for oh in 0..d.h_out {
                    let ih = (oh * d.stride + kh) as isize - d.pad as isize;
                    let dst = &mut col[row * hw + oh * d.w_out..row * hw + (oh + 1) * d.w_out];
                    if ih < 0 || ih >= d.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = &x[(c * d.h + ih as usize) * d.w..(c * d.h + ih as usize + 1) * d.w];
                    if d.stride == 1 {
                        let iw0 = kw as isize - d.pad as isize;
                        for (ow, v) in dst.iter_mut().enumerate() {
                            let iw = iw0 + ow as isize;
                            *v = if iw >= 0 && (iw as usize) < d.w {
                                src_row[iw as usize]
                            } else {
                                0.0
                            };
                        }
                    } else {
                        for (ow, v) in dst.iter_mut().enumerate() {
                            let iw = (ow * d.stride + kw) as isize - d.pad as isize;
                            *v = if iw >= 0 && (iw as usize) < d.w {
                                src_row[iw as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the column gradient back onto one sample `[C,H,W]`.
fn col2im(col: &[f64], d: &ConvDims, gx: &mut [f64]) {
    let hw = d.out_hw();
    for c in 0..d.c_in {
        for kh in 0..d.kh {
            for kw in 0..d.kw {
                let row = (c * d.kh + kh) * d.kw + kw;
                for oh in 0..d.h_out {
                    let ih = (oh * d.stride + kh) as isize - d.pad as isize;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    let src = &col[row * hw + oh * d.w_out..row * hw + (oh + 1) * d.w_out];
                    let dst_row =
                        &mut gx[(c * d.h + ih as usize) * d.w..(c * d.h + ih as usize + 1) * d.w];
                    for (ow, &v) in src.iter().enumerate() {
                        let iw = (ow * d.stride + kw) as isize - d.pad as isize;
                        if iw >= 0 && (iw as usize) < d.w {
                            dst_row[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    /// Hash of every discrete decision the forward pass took: PReLU branch
    /// signs, max-pool argmax indices, element-max winners. Two evaluations
    /// whose signatures differ are separated by a derivative discontinuity,
    /// so a central difference across them does not estimate a gradient.
    pub fn kink_signature(&self) -> u64 {
        let mut h = Fnv::new();
        for node in &self.nodes {
            match &node.op {
                Op::PRelu { input, .. } => {
                    for &v in self.value(*input).data() {
                        h.bit(v < 0.0);
                    }
                }
                Op::MaxElem { a, b } => {
                    for (&x, &y) in self.value(*a).data().iter().zip(self.value(*b).data()) {
                        h.bit(y > x);
                    }
                }
                Op::MaxPool2d { argmax, .. } => {
                    for &am in argmax {
                        h.u32(am);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }
}

/// FNV-1a accumulator for kink signatures.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn byte(&mut self, b: u8) {
        self.0 ^= u64::from(b);
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
    }

    fn bit(&mut self, b: bool) {
        self.byte(u8::from(b));
    }

    fn u32(&mut self, v: u32) {
        for b in v.to_le_bytes() {
            self.byte(b);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Row-wise softmax without graph participation (inference paths).
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let shape = logits.shape();
    assert_eq!(shape.len(), 2, "softmax_rows expects [B,C]");
    let c = shape[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let zmax = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - zmax).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}
