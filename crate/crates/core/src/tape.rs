//! Minimal reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! [`Tape::backward`] walks the nodes in reverse insertion order, so the graph
//! is acyclic by construction. Tapes are single-owner and cheap to build; a
//! parallel caller builds one per worker.
//!
//! Layout conventions: feature maps are `[channels, freq, time]`; 2-D
//! convolution weights are `[out, in, k_freq, k_time]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Silu,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Silu => x * sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride_freq: usize,
    pub dilation_time: usize,
    pub pad_freq: usize,
    pub pad_time: usize,
}

impl Conv2dSpec {
    /// Stride 1, no dilation, "same" padding for a `kf × kt` kernel.
    pub fn same(kf: usize, kt: usize) -> Self {
        Self {
            stride_freq: 1,
            dilation_time: 1,
            pad_freq: kf / 2,
            pad_time: kt / 2,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    ChannelBias(Var, Var),
    ChannelScale(Var, Var),
    FreqScale(Var, Var),
    ChannelMean(Var),
    Conv2d(Var, Var, Conv2dSpec),
    FreqLinear(Var, Var),
    UpsampleFreq(Var, usize),
    Act(Var, Activation),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Reshape(Var),
    External(Var, Tensor),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; unreachable nodes read as zero.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn shape_err<T>(what: &str, a: &[usize], b: &[usize]) -> Result<T> {
    Err(Error::Shape(format!("{what}: {a:?} vs {b:?}")))
}

fn dims3(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "{what}: expected [C, F, K], got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], shape[2]))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).zip_map(self.val(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).zip_map(self.val(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).zip_map(self.val(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.val(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    /// `[m, k] · [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.val(a).shape(), self.val(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err("matmul", sa, sb);
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.val(a).data(), self.val(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += av * db[p * n + j];
                }
            }
        }
        let out = Tensor::new(&[m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn channel_broadcast(&self, x: Var, c: Var, what: &str) -> Result<(usize, usize)> {
        let (sx, sc) = (self.val(x).shape(), self.val(c).shape());
        if sx.is_empty() || self.val(c).len() != sx[0] {
            return shape_err(what, sx, sc);
        }
        Ok((sx[0], self.val(x).len() / sx[0]))
    }

    /// Adds `b[c]` to every element of channel `c`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (ch, plane) = self.channel_broadcast(x, b, "channel_bias")?;
        let mut out = self.val(x).clone();
        let bd = self.val(b).data();
        for c in 0..ch {
            for v in &mut out.data_mut()[c * plane..(c + 1) * plane] {
                *v += bd[c];
            }
        }
        Ok(self.push(out, Op::ChannelBias(x, b)))
    }

    /// Multiplies channel `c` by `g[c]`.
    pub fn channel_scale(&mut self, x: Var, g: Var) -> Result<Var> {
        let (ch, plane) = self.channel_broadcast(x, g, "channel_scale")?;
        let mut out = self.val(x).clone();
        let gd = self.val(g).data();
        for c in 0..ch {
            for v in &mut out.data_mut()[c * plane..(c + 1) * plane] {
                *v *= gd[c];
            }
        }
        Ok(self.push(out, Op::ChannelScale(x, g)))
    }

    /// `[C, F, K] ⊙ g[F]`, broadcast over channels and frames.
    pub fn freq_scale(&mut self, x: Var, g: Var) -> Result<Var> {
        let (c, f, k) = dims3(self.val(x).shape(), "freq_scale")?;
        if self.val(g).len() != f {
            return shape_err("freq_scale", self.val(x).shape(), self.val(g).shape());
        }
        let gd = self.val(g).data().to_vec();
        let mut out = self.val(x).clone();
        let d = out.data_mut();
        for ci in 0..c {
            for fi in 0..f {
                let base = (ci * f + fi) * k;
                for v in &mut d[base..base + k] {
                    *v *= gd[fi];
                }
            }
        }
        Ok(self.push(out, Op::FreqScale(x, g)))
    }

    /// Mean over everything but the leading axis: `[C, ...] → [C]`.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        let sx = self.val(x).shape();
        if sx.is_empty() {
            return shape_err("channel_mean", sx, &[]);
        }
        let ch = sx[0];
        let plane = self.val(x).len() / ch;
        let d = self.val(x).data();
        let out: Vec<f64> = (0..ch)
            .map(|c| d[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64)
            .collect();
        let out = Tensor::new(&[ch], out)?;
        Ok(self.push(out, Op::ChannelMean(x)))
    }

    /// 2-D convolution over `[C_in, F, K]` with weights `[C_out, C_in, kf, kt]`.
    /// Striding applies to the frequency axis only, dilation to time only.
    pub fn conv2d(&mut self, x: Var, w: Var, spec: Conv2dSpec) -> Result<Var> {
        let (cin, f, k) = dims3(self.val(x).shape(), "conv2d input")?;
        let sw = self.val(w).shape();
        if sw.len() != 4 || sw[1] != cin {
            return shape_err("conv2d weight", self.val(x).shape(), sw);
        }
        if spec.stride_freq == 0 || spec.dilation_time == 0 {
            return Err(Error::Shape(
                "conv2d stride and dilation must be positive".into(),
            ));
        }
        let (cout, kf, kt) = (sw[0], sw[2], sw[3]);
        let (fo, ko) = conv_out_dims(f, k, kf, kt, spec)?;
        let xd = self.val(x).data();
        let wd = self.val(w).data();
        let mut out = vec![0.0; cout * fo * ko];
        for co in 0..cout {
            for ci in 0..cin {
                for i in 0..kf {
                    for j in 0..kt {
                        let wv = wd[((co * cin + ci) * kf + i) * kt + j];
                        for fi in 0..fo {
                            let src_f =
                                (fi * spec.stride_freq + i) as isize - spec.pad_freq as isize;
                            if src_f < 0 || src_f as usize >= f {
                                continue;
                            }
                            let xrow = (ci * f + src_f as usize) * k;
                            let orow = (co * fo + fi) * ko;
                            for ki in 0..ko {
                                let src_k =
                                    (ki + j * spec.dilation_time) as isize - spec.pad_time as isize;
                                if src_k < 0 || src_k as usize >= k {
                                    continue;
                                }
                                out[orow + ki] += wv * xd[xrow + src_k as usize];
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new(&[cout, fo, ko], out)?;
        Ok(self.push(out, Op::Conv2d(x, w, spec)))
    }

    /// Grouped linear map across frequency: channel `c` of `[C, F, K]` is mixed
    /// by `w[c / (C / G)]`, where `w` is `[G, F, F]`.
    pub fn freq_linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (c, f, k) = dims3(self.val(x).shape(), "freq_linear input")?;
        let sw = self.val(w).shape();
        if sw.len() != 3 || sw[1] != f || sw[2] != f || sw[0] == 0 || c % sw[0] != 0 {
            return shape_err("freq_linear weight", self.val(x).shape(), sw);
        }
        let per_group = c / sw[0];
        let xd = self.val(x).data();
        let wd = self.val(w).data();
        let mut out = vec![0.0; c * f * k];
        for ci in 0..c {
            let g = ci / per_group;
            for fo in 0..f {
                let orow = (ci * f + fo) * k;
                for fi in 0..f {
                    let wv = wd[(g * f + fo) * f + fi];
                    if wv == 0.0 {
                        continue;
                    }
                    let xrow = (ci * f + fi) * k;
                    for ki in 0..k {
                        out[orow + ki] += wv * xd[xrow + ki];
                    }
                }
            }
        }
        let out = Tensor::new(&[c, f, k], out)?;
        Ok(self.push(out, Op::FreqLinear(x, w)))
    }

    /// Nearest-neighbour repeat along frequency: `[C, F, K] → [C, F·factor, K]`.
    pub fn upsample_freq(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (c, f, k) = dims3(self.val(x).shape(), "upsample_freq")?;
        let xd = self.val(x).data();
        let fo = f * factor;
        let mut out = vec![0.0; c * fo * k];
        for ci in 0..c {
            for fi in 0..fo {
                let src = (ci * f + fi / factor) * k;
                let dst = (ci * fo + fi) * k;
                out[dst..dst + k].copy_from_slice(&xd[src..src + k]);
            }
        }
        let out = Tensor::new(&[c, fo, k], out)?;
        Ok(self.push(out, Op::UpsampleFreq(x, factor)))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let out = self.val(x).map(|v| act.apply(v));
        self.push(out, Op::Act(x, act))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.val(x).sum());
        self.push(out, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.val(x);
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        self.push(out, Op::Mean(x))
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.val(parts[0]).shape().to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.val(p).shape();
            if s.len() != first.len() || s[1..] != first[1..] {
                return shape_err("concat", &first, s);
            }
            lead += s[0];
            data.extend_from_slice(self.val(p).data());
        }
        let mut shape = first;
        shape[0] = lead;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Rows `start..start + len` of the leading axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.val(x).shape().to_vec();
        if s.is_empty() || start + len > s[0] {
            return Err(Error::Shape(format!("slice {start}+{len} of {s:?}")));
        }
        let row = self.val(x).len() / s[0];
        let data = self.val(x).data()[start * row..(start + len) * row].to_vec();
        let mut shape = s;
        shape[0] = len;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::Slice(x, start, len)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.val(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Scalar node whose value and gradient w.r.t. `x` were computed outside
    /// the tape (e.g. a loss through an FFT pipeline).
    pub fn external(&mut self, x: Var, value: f64, grad: Tensor) -> Result<Var> {
        self.val(x).ensure_same_shape(&grad, "external gradient")?;
        Ok(self.push(Tensor::scalar(value), Op::External(x, grad)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.val(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got {:?}",
                self.val(loss).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| match &mut grads[v.0] {
            Some(existing) => {
                for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                    *e += d;
                }
            }
            slot @ None => *slot = Some(delta),
        };
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                acc(*a, g.zip_map(vb, |x, y| x * y).expect("shape"));
                acc(*b, g.zip_map(va, |x, y| x * y).expect("shape"));
            }
            Op::Scale(a, s) => acc(*a, g.map(|v| v * s)),
            Op::MatMul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                let (da, db) = (va.data(), vb.data());
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += gd[i * n + j] * db[p * n + j];
                            gb[p * n + j] += da[i * k + p] * gd[i * n + j];
                        }
                        ga[i * k + p] = s;
                    }
                }
                acc(*a, Tensor::new(&[m, k], ga).expect("shape"));
                acc(*b, Tensor::new(&[k, n], gb).expect("shape"));
            }
            Op::ChannelBias(x, b) => {
                let ch = self.val(*b).len();
                let plane = g.len() / ch;
                let gb: Vec<f64> = (0..ch)
                    .map(|c| gd[c * plane..(c + 1) * plane].iter().sum())
                    .collect();
                acc(*x, g.clone());
                acc(*b, Tensor::new(self.val(*b).shape(), gb).expect("shape"));
            }
            Op::ChannelScale(x, s) => {
                let vs = self.val(*s);
                let vx = self.val(*x);
                let ch = vs.len();
                let plane = g.len() / ch;
                let mut gx = g.clone();
                let mut gs = vec![0.0; ch];
                for c in 0..ch {
                    for i in c * plane..(c + 1) * plane {
                        gs[c] += gd[i] * vx.data()[i];
                        gx.data_mut()[i] *= vs.data()[c];
                    }
                }
                acc(*x, gx);
                acc(*s, Tensor::new(vs.shape(), gs).expect("shape"));
            }
            Op::FreqScale(x, s) => {
                let vx = self.val(*x);
                let vs = self.val(*s);
                let (c, f, k) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
                let mut gx = g.clone();
                let mut gs = vec![0.0; f];
                for ci in 0..c {
                    for fi in 0..f {
                        let base = (ci * f + fi) * k;
                        for i in base..base + k {
                            gs[fi] += gd[i] * vx.data()[i];
                            gx.data_mut()[i] *= vs.data()[fi];
                        }
                    }
                }
                acc(*x, gx);
                acc(*s, Tensor::new(vs.shape(), gs).expect("shape"));
            }
            Op::ChannelMean(x) => {
                let vx = self.val(*x);
                let ch = vx.shape()[0];
                let plane = vx.len() / ch;
                let gx = Tensor::from_fn(vx.shape(), |i| gd[i / plane] / plane as f64);
                acc(*x, gx);
            }
            Op::Conv2d(x, w, spec) => {
                let (gx, gw) = self.conv2d_backward(*x, *w, *spec, g);
                acc(*x, gx);
                acc(*w, gw);
            }
            Op::FreqLinear(x, w) => {
                let vx = self.val(*x);
                let vw = self.val(*w);
                let (c, f, k) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
                let per_group = c / vw.shape()[0];
                let (xd, wd) = (vx.data(), vw.data());
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                for ci in 0..c {
                    let grp = ci / per_group;
                    for fo in 0..f {
                        let orow = (ci * f + fo) * k;
                        for fi in 0..f {
                            let widx = (grp * f + fo) * f + fi;
                            let xrow = (ci * f + fi) * k;
                            let mut s = 0.0;
                            for ki in 0..k {
                                s += gd[orow + ki] * xd[xrow + ki];
                                gx[xrow + ki] += wd[widx] * gd[orow + ki];
                            }
                            gw[widx] += s;
                        }
                    }
                }
                acc(*x, Tensor::new(vx.shape(), gx).expect("shape"));
                acc(*w, Tensor::new(vw.shape(), gw).expect("shape"));
            }
            Op::UpsampleFreq(x, factor) => {
                let vx = self.val(*x);
                let (c, f, k) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
                let fo = f * factor;
                let mut gx = vec![0.0; vx.len()];
                for ci in 0..c {
                    for fi in 0..fo {
                        let src = (ci * fo + fi) * k;
                        let dst = (ci * f + fi / factor) * k;
                        for ki in 0..k {
                            gx[dst + ki] += gd[src + ki];
                        }
                    }
                }
                acc(*x, Tensor::new(vx.shape(), gx).expect("shape"));
            }
            Op::Act(x, act) => {
                let vx = self.val(*x);
                let gx = Tensor::from_fn(vx.shape(), |i| {
                    gd[i] * act.derivative(vx.data()[i], out.data()[i])
                });
                acc(*x, gx);
            }
            Op::Sum(x) => {
                let vx = self.val(*x);
                acc(*x, Tensor::full(vx.shape(), gd[0]));
            }
            Op::Mean(x) => {
                let vx = self.val(*x);
                acc(*x, Tensor::full(vx.shape(), gd[0] / vx.len() as f64));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let vp = self.val(p);
                    let n = vp.len();
                    acc(
                        p,
                        Tensor::new(vp.shape(), gd[offset..offset + n].to_vec()).expect("shape"),
                    );
                    offset += n;
                }
            }
            Op::Slice(x, start, len) => {
                let vx = self.val(*x);
                let row = vx.len() / vx.shape()[0];
                let mut gx = vec![0.0; vx.len()];
                gx[start * row..(start + len) * row].copy_from_slice(gd);
                acc(*x, Tensor::new(vx.shape(), gx).expect("shape"));
            }
            Op::Reshape(x) => {
                let vx = self.val(*x);
                acc(*x, Tensor::new(vx.shape(), gd.to_vec()).expect("shape"));
            }
            Op::External(x, grad) => acc(*x, grad.map(|v| v * gd[0])),
        }
    }

    fn conv2d_backward(&self, x: Var, w: Var, spec: Conv2dSpec, g: &Tensor) -> (Tensor, Tensor) {
        let vx = self.val(x);
        let vw = self.val(w);
        let (cin, f, k) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (cout, kf, kt) = (vw.shape()[0], vw.shape()[2], vw.shape()[3]);
        let (fo, ko) = (g.shape()[1], g.shape()[2]);
        let (xd, wd, gd) = (vx.data(), vw.data(), g.data());
        let mut gx = vec![0.0; xd.len()];
        let mut gw = vec![0.0; wd.len()];
        for co in 0..cout {
            for ci in 0..cin {
                for i in 0..kf {
                    for j in 0..kt {
                        let widx = ((co * cin + ci) * kf + i) * kt + j;
                        let wv = wd[widx];
                        let mut sw = 0.0;
                        for fi in 0..fo {
                            let src_f =
                                (fi * spec.stride_freq + i) as isize - spec.pad_freq as isize;
                            if src_f < 0 || src_f as usize >= f {
                                continue;
                            }
                            let xrow = (ci * f + src_f as usize) * k;
                            let orow = (co * fo + fi) * ko;
                            for ki in 0..ko {
                                let src_k =
                                    (ki + j * spec.dilation_time) as isize - spec.pad_time as isize;
                                if src_k < 0 || src_k as usize >= k {
                                    continue;
                                }
                                let xi = xrow + src_k as usize;
                                sw += gd[orow + ki] * xd[xi];
                                gx[xi] += wv * gd[orow + ki];
                            }
                        }
                        gw[widx] += sw;
                    }
                }
            }
        }
        (
            Tensor::new(vx.shape(), gx).expect("shape"),
            Tensor::new(vw.shape(), gw).expect("shape"),
        )
    }
}

pub fn conv_out_dims(
    f: usize,
    k: usize,
    kf: usize,
    kt: usize,
    spec: Conv2dSpec,
) -> Result<(usize, usize)> {
    let fp = f + 2 * spec.pad_freq;
    let kp = k + 2 * spec.pad_time;
    let span_t = spec.dilation_time * (kt - 1) + 1;
    if fp < kf || kp < span_t {
        return Err(Error::Shape(format!(
            "conv kernel {kf}x{kt} larger than padded input {fp}x{kp}"
        )));
    }
    Ok(((fp - kf) / spec.stride_freq + 1, kp - span_t + 1))
}
