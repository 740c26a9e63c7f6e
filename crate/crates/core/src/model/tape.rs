//! Recording of forward operations for reverse-mode differentiation.
//!
//! Every op appends a node holding its output value. [`Tape::backward`]
//! walks the nodes in reverse and accumulates parameter gradients.
//! 3×3 convolutions pad by edge replication so spatially constant inputs
//! stay constant all the way to the border.

use matrixmultiply::dgemm;

use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::resample::{linear_taps, LinearTap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

const GN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Input,
    Conv {
        x: NodeId,
        weight: ParamId,
        bias: Option<ParamId>,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    GroupNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        groups: usize,
        /// `(mean, rstd)` per `(sample, group)`.
        stats: Vec<(f64, f64)>,
    },
    Relu {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    AdaptiveAvgPool {
        x: NodeId,
        bins: usize,
    },
    Resize {
        x: NodeId,
        ty: Vec<LinearTap>,
        tx: Vec<LinearTap>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn into_value(mut self, id: NodeId) -> Tensor {
        self.nodes.swap_remove(id.0).value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Input)
    }

    /// Square-kernel convolution; weight shape `[cout, cin, k, k]`.
    pub fn conv(
        &mut self,
        x: NodeId,
        weight: ParamId,
        bias: Option<ParamId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let w = self.params.get(weight);
        let [cout, cin, k, k2] = w.shape[..] else {
            return Err(Error::Shape(format!("conv weight `{}` is not 4-d", w.name)));
        };
        debug_assert_eq!(k, k2);
        let input = self.value(x);
        if input.channels() != cin {
            return Err(Error::Shape(format!(
                "`{}` expects {cin} input channels, got {}",
                w.name,
                input.channels()
            )));
        }
        let geo = ConvGeometry::new(input.shape(), k, stride, pad)?;
        let [n, _, _, _] = input.shape();
        let mut out = Tensor::zeros([n, cout, geo.hout, geo.wout]);
        let kk = cin * k * k;
        let p = geo.hout * geo.wout;
        let per_in = cin * geo.hin * geo.win;
        let mut cols = vec![0.0; kk * p];
        for s in 0..n {
            let x_s = &input.data()[s * per_in..(s + 1) * per_in];
            let b: &[f64] = if geo.is_pointwise() {
                x_s
            } else {
                geo.im2col(x_s, cin, &mut cols);
                &cols
            };
            let out_s = &mut out.data_mut()[s * cout * p..(s + 1) * cout * p];
            gemm(cout, kk, p, &w.data, kk, 1, b, p, 1, out_s, 0.0);
            if let Some(bias) = bias {
                let bias = &self.params.get(bias).data;
                for (c, row) in out_s.chunks_exact_mut(p).enumerate() {
                    row.iter_mut().for_each(|v| *v += bias[c]);
                }
            }
        }
        Ok(self.push(
            out,
            Op::Conv {
                x,
                weight,
                bias,
                kernel: k,
                stride,
                pad,
            },
        ))
    }

    pub fn group_norm(
        &mut self,
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        groups: usize,
    ) -> Result<NodeId> {
        let input = self.value(x);
        let [n, c, h, w] = input.shape();
        if groups == 0 || c % groups != 0 {
            return Err(Error::Shape(format!(
                "{c} channels not divisible into {groups} groups"
            )));
        }
        let g_ = &self.params.get(gamma).data;
        let b_ = &self.params.get(beta).data;
        let cpg = c / groups;
        let len = cpg * h * w;
        let mut out = Tensor::zeros(input.shape());
        let mut stats = Vec::with_capacity(n * groups);
        for s in 0..n {
            for g in 0..groups {
                let off = (s * c + g * cpg) * h * w;
                let xs = &input.data()[off..off + len];
                let mean = xs.iter().sum::<f64>() / len as f64;
                let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
                let rstd = 1.0 / (var + GN_EPS).sqrt();
                stats.push((mean, rstd));
                let os = &mut out.data_mut()[off..off + len];
                for (ci, (orow, xrow)) in os.chunks_exact_mut(h * w).zip(xs.chunks_exact(h * w)).enumerate() {
                    let ch = g * cpg + ci;
                    for (o, &v) in orow.iter_mut().zip(xrow) {
                        *o = (v - mean) * rstd * g_[ch] + b_[ch];
                    }
                }
            }
        }
        Ok(self.push(
            out,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                stats,
            },
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        // `f64::max` would turn NaN into 0 and hide a diverged forward pass
        out.data_mut().iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v = 0.0
            }
        });
        self.push(out, Op::Relu { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "add {:?} + {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add { a, b }))
    }

    /// Channel concatenation.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = self.value(parts[0]).shape();
        let [n, _, h, w] = first;
        let mut c_total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s[0] != n || s[2] != h || s[3] != w {
                return Err(Error::Shape(format!("concat {s:?} with {first:?}")));
            }
            c_total += s[1];
        }
        let mut out = Tensor::zeros([n, c_total, h, w]);
        let hw = h * w;
        for s in 0..n {
            let mut c_off = 0;
            for &p in parts {
                let t = self.value(p);
                let c = t.channels();
                let src = &t.data()[s * c * hw..(s + 1) * c * hw];
                let dst = (s * c_total + c_off) * hw;
                out.data_mut()[dst..dst + c * hw].copy_from_slice(src);
                c_off += c;
            }
        }
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Average pooling onto a `bins × bins` grid; cell `i` spans
    /// `[floor(i·H/bins), ceil((i+1)·H/bins))`.
    pub fn adaptive_avg_pool(&mut self, x: NodeId, bins: usize) -> Result<NodeId> {
        let input = self.value(x);
        let [n, c, h, w] = input.shape();
        if bins == 0 || bins > h || bins > w {
            return Err(Error::Shape(format!(
                "pooling {h}x{w} onto {bins}x{bins} bins"
            )));
        }
        let ry = pool_ranges(h, bins);
        let rx = pool_ranges(w, bins);
        let mut out = Tensor::zeros([n, c, bins, bins]);
        for plane in 0..n * c {
            let src = &input.data()[plane * h * w..(plane + 1) * h * w];
            for (by, &(y0, y1)) in ry.iter().enumerate() {
                for (bx, &(x0, x1)) in rx.iter().enumerate() {
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        acc += src[y * w + x0..y * w + x1].iter().sum::<f64>();
                    }
                    out.data_mut()[(plane * bins + by) * bins + bx] =
                        acc / ((y1 - y0) * (x1 - x0)) as f64;
                }
            }
        }
        Ok(self.push(out, Op::AdaptiveAvgPool { x, bins }))
    }

    /// Bilinear resize, half-pixel centers, no corner alignment.
    pub fn resize(&mut self, x: NodeId, height: usize, width: usize) -> NodeId {
        let input = self.value(x);
        if input.height() == height && input.width() == width {
            return x;
        }
        let [n, c, h, w] = input.shape();
        let ty = linear_taps(h, height);
        let tx = linear_taps(w, width);
        let mut out = Tensor::zeros([n, c, height, width]);
        for plane in 0..n * c {
            let src = &input.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out.data_mut()[plane * height * width..(plane + 1) * height * width];
            for (oy, t) in ty.iter().enumerate() {
                let r0 = &src[t.lo * w..(t.lo + 1) * w];
                let r1 = &src[t.hi * w..(t.hi + 1) * w];
                for (ox, s) in tx.iter().enumerate() {
                    let top = r0[s.lo] * (1.0 - s.frac) + r0[s.hi] * s.frac;
                    let bot = r1[s.lo] * (1.0 - s.frac) + r1[s.hi] * s.frac;
                    dst[oy * width + ox] = top * (1.0 - t.frac) + bot * t.frac;
                }
            }
        }
        self.push(out, Op::Resize { x, ty, tx })
    }

    /// Back-propagates `grad` (the gradient of a scalar objective w.r.t.
    /// `output`) and returns parameter gradients in [`ParamSet`] layout.
    pub fn backward(&self, output: NodeId, grad: Tensor) -> Result<ParamSet> {
        if grad.shape() != self.value(output).shape() {
            return Err(Error::Shape(format!(
                "seed gradient {:?} for output {:?}",
                grad.shape(),
                self.value(output).shape()
            )));
        }
        let mut pgrads = self.params.zeros_like();
        let mut grads: Vec<Option<Tensor>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(grad);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Conv {
                    x,
                    weight,
                    bias,
                    kernel,
                    stride,
                    pad,
                } => {
                    let input = self.value(*x);
                    let geo = ConvGeometry::new(input.shape(), *kernel, *stride, *pad)?;
                    let w = self.params.get(*weight);
                    let (cout, cin) = (w.shape[0], w.shape[1]);
                    let kk = cin * kernel * kernel;
                    let p = geo.hout * geo.wout;
                    let per_in = cin * geo.hin * geo.win;
                    let mut dx = Tensor::zeros(input.shape());
                    let mut cols = vec![0.0; kk * p];
                    let mut dcols = vec![0.0; kk * p];
                    for s in 0..input.batch() {
                        let x_s = &input.data()[s * per_in..(s + 1) * per_in];
                        let g_s = &g.data()[s * cout * p..(s + 1) * cout * p];
                        let b: &[f64] = if geo.is_pointwise() {
                            x_s
                        } else {
                            geo.im2col(x_s, cin, &mut cols);
                            &cols
                        };
                        // dW += dY · colsᵀ
                        let dw = &mut pgrads.get_mut(*weight).data;
                        gemm(cout, p, kk, g_s, p, 1, b, 1, p, dw, 1.0);
                        if let Some(bias) = bias {
                            let db = &mut pgrads.get_mut(*bias).data;
                            for (c, row) in g_s.chunks_exact(p).enumerate() {
                                db[c] += row.iter().sum::<f64>();
                            }
                        }
                        if matches!(self.nodes[x.0].op, Op::Input) {
                            continue;
                        }
                        // dcols = Wᵀ · dY
                        let dx_s = &mut dx.data_mut()[s * per_in..(s + 1) * per_in];
                        if geo.is_pointwise() {
                            gemm(kk, cout, p, &w.data, 1, kk, g_s, p, 1, dx_s, 0.0);
                        } else {
                            gemm(kk, cout, p, &w.data, 1, kk, g_s, p, 1, &mut dcols, 0.0);
                            geo.col2im(&dcols, cin, dx_s);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    stats,
                } => {
                    let input = self.value(*x);
                    let [n, c, h, w] = input.shape();
                    let cpg = c / groups;
                    let hw = h * w;
                    let len = (cpg * hw) as f64;
                    let gam = &self.params.get(*gamma).data;
                    let mut dx = Tensor::zeros(input.shape());
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for s in 0..n {
                        for gi in 0..*groups {
                            let (mean, rstd) = stats[s * groups + gi];
                            let off = (s * c + gi * cpg) * hw;
                            let mut sum_dxh = 0.0;
                            let mut sum_dxh_xh = 0.0;
                            for ci in 0..cpg {
                                let ch = gi * cpg + ci;
                                for j in 0..hw {
                                    let idx = off + ci * hw + j;
                                    let xh = (input.data()[idx] - mean) * rstd;
                                    let dy = g.data()[idx];
                                    dgamma[ch] += dy * xh;
                                    dbeta[ch] += dy;
                                    let dxh = dy * gam[ch];
                                    sum_dxh += dxh;
                                    sum_dxh_xh += dxh * xh;
                                }
                            }
                            let m1 = sum_dxh / len;
                            let m2 = sum_dxh_xh / len;
                            for ci in 0..cpg {
                                let ch = gi * cpg + ci;
                                for j in 0..hw {
                                    let idx = off + ci * hw + j;
                                    let xh = (input.data()[idx] - mean) * rstd;
                                    let dxh = g.data()[idx] * gam[ch];
                                    dx.data_mut()[idx] = rstd * (dxh - m1 - xh * m2);
                                }
                            }
                        }
                    }
                    add_into(&mut pgrads.get_mut(*gamma).data, &dgamma);
                    add_into(&mut pgrads.get_mut(*beta).data, &dbeta);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Relu { x } => {
                    let mut dx = g;
                    for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Concat { parts } => {
                    let [n, c_total, h, w] = g.shape();
                    let hw = h * w;
                    let mut c_off = 0;
                    for &p in parts {
                        let c = self.value(p).channels();
                        let mut dp = Tensor::zeros([n, c, h, w]);
                        for s in 0..n {
                            let src = (s * c_total + c_off) * hw;
                            dp.data_mut()[s * c * hw..(s + 1) * c * hw]
                                .copy_from_slice(&g.data()[src..src + c * hw]);
                        }
                        c_off += c;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::AdaptiveAvgPool { x, bins } => {
                    let input = self.value(*x);
                    let [n, c, h, w] = input.shape();
                    let ry = pool_ranges(h, *bins);
                    let rx = pool_ranges(w, *bins);
                    let mut dx = Tensor::zeros(input.shape());
                    for plane in 0..n * c {
                        let dst = &mut dx.data_mut()[plane * h * w..(plane + 1) * h * w];
                        for (by, &(y0, y1)) in ry.iter().enumerate() {
                            for (bx, &(x0, x1)) in rx.iter().enumerate() {
                                let gv = g.data()[(plane * bins + by) * bins + bx]
                                    / ((y1 - y0) * (x1 - x0)) as f64;
                                for y in y0..y1 {
                                    dst[y * w + x0..y * w + x1].iter_mut().for_each(|d| *d += gv);
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Resize { x, ty, tx } => {
                    let input = self.value(*x);
                    let [n, c, h, w] = input.shape();
                    let (oh, ow) = (ty.len(), tx.len());
                    let mut dx = Tensor::zeros(input.shape());
                    for plane in 0..n * c {
                        let src = &g.data()[plane * oh * ow..(plane + 1) * oh * ow];
                        let dst = &mut dx.data_mut()[plane * h * w..(plane + 1) * h * w];
                        for (oy, t) in ty.iter().enumerate() {
                            for (ox, s) in tx.iter().enumerate() {
                                let gv = src[oy * ow + ox];
                                let top = gv * (1.0 - t.frac);
                                let bot = gv * t.frac;
                                dst[t.lo * w + s.lo] += top * (1.0 - s.frac);
                                dst[t.lo * w + s.hi] += top * s.frac;
                                dst[t.hi * w + s.lo] += bot * (1.0 - s.frac);
                                dst[t.hi * w + s.hi] += bot * s.frac;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
            }
        }
        Ok(pgrads)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn pool_ranges(len: usize, bins: usize) -> Vec<(usize, usize)> {
    (0..bins)
        .map(|i| (i * len / bins, ((i + 1) * len).div_ceil(bins)))
        .collect()
}

/// `c = alpha_c · c + a · b` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds row-major views of the slices
    // (a: m×k, b: k×n, c: m×n), checked by the callers' shape logic.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct ConvGeometry {
    hin: usize,
    win: usize,
    hout: usize,
    wout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    /// Clamped source row for `(output row, kernel row)`.
    src_y: Vec<usize>,
    src_x: Vec<usize>,
}

impl ConvGeometry {
    fn new(shape: [usize; 4], k: usize, stride: usize, pad: usize) -> Result<Self> {
        let [_, _, hin, win] = shape;
        if hin + 2 * pad < k || win + 2 * pad < k || stride == 0 {
            return Err(Error::Shape(format!(
                "{k}x{k} conv (stride {stride}, pad {pad}) on {hin}x{win}"
            )));
        }
        let hout = (hin + 2 * pad - k) / stride + 1;
        let wout = (win + 2 * pad - k) / stride + 1;
        let table = |out: usize, len: usize| {
            let mut t = Vec::with_capacity(out * k);
            for o in 0..out {
                for kk in 0..k {
                    let v = (o * stride + kk) as isize - pad as isize;
                    t.push(v.clamp(0, len as isize - 1) as usize);
                }
            }
            t
        };
        Ok(ConvGeometry {
            hin,
            win,
            hout,
            wout,
            k,
            stride,
            pad,
            src_y: table(hout, hin),
            src_x: table(wout, win),
        })
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Rows ordered `(cin, ky, kx)`, columns `(oy, ox)`.
    fn im2col(&self, x: &[f64], cin: usize, cols: &mut [f64]) {
        let p = self.hout * self.wout;
        let plane = self.hin * self.win;
        for c in 0..cin {
            let xc = &x[c * plane..(c + 1) * plane];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = ((c * self.k + ky) * self.k + kx) * p;
                    let dst = &mut cols[row..row + p];
                    for oy in 0..self.hout {
                        let sy = self.src_y[oy * self.k + ky] * self.win;
                        for ox in 0..self.wout {
                            dst[oy * self.wout + ox] = xc[sy + self.src_x[ox * self.k + kx]];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], cin: usize, dx: &mut [f64]) {
        let p = self.hout * self.wout;
        let plane = self.hin * self.win;
        for c in 0..cin {
            let dxc = &mut dx[c * plane..(c + 1) * plane];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = ((c * self.k + ky) * self.k + kx) * p;
                    let src = &cols[row..row + p];
                    for oy in 0..self.hout {
                        let sy = self.src_y[oy * self.k + ky] * self.win;
                        for ox in 0..self.wout {
                            dxc[sy + self.src_x[ox * self.k + kx]] += src[oy * self.wout + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{Init, ParamSpec};

    fn params(specs: &[(&str, Vec<usize>)], seed: u64) -> ParamSet {
        let specs: Vec<ParamSpec> = specs
            .iter()
            .map(|(n, s)| ParamSpec {
                name: n.to_string(),
                shape: s.clone(),
                init: Init::Normal { std: 0.5 },
            })
            .collect();
        ParamSet::init(&specs, seed)
    }

    fn ramp(shape: [usize; 4]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i * 37) % 11) as f64 * 0.1 - 0.5).collect()).unwrap()
    }

    /// Direct-loop convolution with replicate padding.
    fn conv_naive(x: &Tensor, w: &[f64], cout: usize, k: usize, stride: usize, pad: usize) -> Tensor {
        let [n, cin, h, wd] = x.shape();
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros([n, cout, ho, wo]);
        for s in 0..n {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let y = ((oy * stride + ky) as isize - pad as isize).clamp(0, h as isize - 1) as usize;
                                    let xx = ((ox * stride + kx) as isize - pad as isize).clamp(0, wd as isize - 1) as usize;
                                    acc += w[((co * cin + ci) * k + ky) * k + kx] * x.at(s, ci, y, xx);
                                }
                            }
                        }
                        let i = out.index(s, co, oy, ox);
                        out.data_mut()[i] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        for &(k, stride, pad) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0)] {
            let p = params(&[("w", vec![4, 3, k, k])], 1);
            let x = ramp([2, 3, 6, 8]);
            let mut tape = Tape::new(&p);
            let xi = tape.input(x.clone());
            let y = tape.conv(xi, ParamId(0), None, stride, pad).unwrap();
            let expect = conv_naive(&x, &p.get(ParamId(0)).data, 4, k, stride, pad);
            assert!(tape.value(y).max_abs_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn pool_ranges_overlap_when_uneven() {
        assert_eq!(pool_ranges(4, 2), vec![(0, 2), (2, 4)]);
        assert_eq!(pool_ranges(5, 3), vec![(0, 2), (1, 4), (3, 5)]);
        assert_eq!(pool_ranges(7, 1), vec![(0, 7)]);
    }

    #[test]
    fn constant_stays_constant() {
        let p = params(&[("w", vec![2, 2, 3, 3])], 2);
        let mut tape = Tape::new(&p);
        let x = tape.input(Tensor::full([1, 2, 5, 7], 0.3));
        let y = tape.conv(x, ParamId(0), None, 2, 1).unwrap();
        let r = tape.resize(y, 9, 11);
        let v = tape.value(r).data();
        let first = v[0];
        assert!(v[..9 * 11].iter().all(|&a| (a - first).abs() < 1e-12));
    }

    /// Central differences of `Σ out · probe` w.r.t. every parameter.
    fn check_param_grads(build: impl Fn(&mut Tape, NodeId) -> NodeId, p: &ParamSet, shape: [usize; 4]) {
        let x = ramp(shape);
        let h = 1e-6;
        let mut t = Tape::new(p);
        let xi = t.input(x.clone());
        let out = build(&mut t, xi);
        let v = t.value(out).clone();
        let probe = Tensor::from_vec(
            v.shape(),
            (0..v.len()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect(),
        )
        .unwrap();
        let g = t.backward(out, probe).unwrap();
        for (pi, param) in p.iter().enumerate() {
            for j in (0..param.data.len()).step_by(3) {
                let mut plus = p.clone();
                plus.get_mut(ParamId(pi)).data[j] += h;
                let mut minus = p.clone();
                minus.get_mut(ParamId(pi)).data[j] -= h;
                let run_p = |ps: &ParamSet| {
                    let mut t = Tape::new(ps);
                    let xi = t.input(x.clone());
                    let out = build(&mut t, xi);
                    t.value(out)
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, a)| a * (((i * 7) % 5) as f64 - 2.0))
                        .sum::<f64>()
                };
                let fd = (run_p(&plus) - run_p(&minus)) / (2.0 * h);
                let an = g.get(ParamId(pi)).data[j];
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "{} [{j}]: fd {fd} vs {an}", param.name);
            }
        }
    }

    #[test]
    fn op_gradients_match_finite_differences() {
        let p = params(
            &[
                ("w1", vec![4, 2, 3, 3]),
                ("b1", vec![4]),
                ("gamma", vec![4]),
                ("beta", vec![4]),
                ("w2", vec![3, 8, 1, 1]),
            ],
            9,
        );
        check_param_grads(
            |t, x| {
                let c = t.conv(x, ParamId(0), Some(ParamId(1)), 2, 1).unwrap();
                let n = t.group_norm(c, ParamId(2), ParamId(3), 2).unwrap();
                let r = t.relu(n);
                let pooled = t.adaptive_avg_pool(r, 2).unwrap();
                let up = t.resize(pooled, 3, 4);
                let cat = t.concat(&[up, r]).unwrap();
                let o = t.conv(cat, ParamId(4), None, 1, 0).unwrap();
                let big = t.resize(o, 7, 9);
                let small = t.resize(big, 3, 4);
                t.add(small, o).unwrap()
            },
            &p,
            [2, 2, 6, 8],
        );
    }
}
