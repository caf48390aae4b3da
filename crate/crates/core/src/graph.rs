//! Reverse-mode differentiation over a recorded operator tape.
//!
//! A [`Graph`] records every operator applied during one forward pass. Leaves
//! are either constants ([`Graph::input`]) or trainable arrays
//! ([`Graph::param`]); [`Graph::backward`] walks the tape in reverse and
//! returns the gradient of a scalar node with respect to every node that
//! depends on a trainable leaf.

use std::borrow::Cow;

use crate::error::{domain_err, Result};
use crate::kernels::conv::{self, ConvGeom, DECONV_KERNEL};
use crate::kernels::sample;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    Deconv2d { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Concat { parts: Vec<Var> },
    Crop { x: Var },
    Warp { src: Var, flow: Var },
    Upsample { x: Var, factor: usize, scale: f32 },
    Charbonnier { pred: Var, target: Var, eps: f32 },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf borrowed from a parameter store.
    pub fn param(&mut self, value: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf borrowed from the caller.
    pub fn constant(&mut self, value: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn grad_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.requires_grad(*v))
    }

    /// Edge-replicated "same" convolution; `w` is `(c_out, c_in, k, k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (c_in, h, wd) = self.value(x).expect_chw()?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 4 || ws[1] != c_in || ws[2] != ws[3] || ws[2] % 2 == 0 {
            return domain_err!("conv weight {:?} incompatible with {} input channels", ws, c_in);
        }
        if self.value(b).len() != ws[0] {
            return domain_err!("conv bias has {} entries, expected {}", self.value(b).len(), ws[0]);
        }
        let geom = ConvGeom {
            kernel: ws[2],
            stride,
        };
        let (out, ho, wo) = conv::conv2d_forward(
            self.value(x).data(),
            (c_in, h, wd),
            self.value(w).data(),
            self.value(b).data(),
            ws[0],
            geom,
        );
        let t = Tensor::new(vec![ws[0], ho, wo], out)?;
        let rg = self.grad_any(&[x, w, b]);
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Transposed convolution doubling the spatial size; `w` is `(c_in, c_out, 4, 4)`.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (c_in, h, wd) = self.value(x).expect_chw()?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 4 || ws[0] != c_in || ws[2] != DECONV_KERNEL || ws[3] != DECONV_KERNEL {
            return domain_err!("deconv weight {:?} incompatible with {} input channels", ws, c_in);
        }
        if self.value(b).len() != ws[1] {
            return domain_err!("deconv bias has {} entries, expected {}", self.value(b).len(), ws[1]);
        }
        let out = conv::deconv2d_forward(
            self.value(x).data(),
            (c_in, h, wd),
            self.value(w).data(),
            self.value(b).data(),
            ws[1],
        );
        let t = Tensor::new(vec![ws[1], 2 * h, 2 * wd], out)?;
        let rg = self.grad_any(&[x, w, b]);
        Ok(self.push(t, Op::Deconv2d { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v < 0.0 { 0.0 } else { v });
        let rg = self.requires_grad(x);
        self.push(t, Op::Relu { x }, rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let t = Tensor::concat_channels(&refs)?;
        let rg = self.grad_any(parts);
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Keeps the top-left `h × w` window.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let (_, sh, sw) = self.value(x).expect_chw()?;
        if h > sh || w > sw {
            return domain_err!("cannot crop {}x{} to {}x{}", sh, sw, h, w);
        }
        if (h, w) == (sh, sw) {
            return Ok(x);
        }
        let t = self.value(x).crop(0, 0, h, w);
        let rg = self.requires_grad(x);
        Ok(self.push(t, Op::Crop { x }, rg))
    }

    /// Backward warp of `src` by the 2-channel displacement `flow`.
    pub fn warp(&mut self, src: Var, flow: Var) -> Result<Var> {
        let (c, h, w) = self.value(src).expect_chw()?;
        let (fc, fh, fw) = self.value(flow).expect_chw()?;
        if fc != 2 || (fh, fw) != (h, w) {
            return domain_err!("flow {}x{}x{} cannot warp a {}x{} raster", fc, fh, fw, h, w);
        }
        let out = sample::warp_forward(self.value(src).data(), (c, h, w), self.value(flow).data());
        let t = Tensor::new(vec![c, h, w], out)?;
        let rg = self.grad_any(&[src, flow]);
        Ok(self.push(t, Op::Warp { src, flow }, rg))
    }

    /// Bilinear upsampling by `factor` with values multiplied by `scale`.
    pub fn upsample(&mut self, x: Var, factor: usize, scale: f32) -> Result<Var> {
        let (c, h, w) = self.value(x).expect_chw()?;
        let out = sample::upsample_forward(self.value(x).data(), (c, h, w), factor, scale);
        let t = Tensor::new(vec![c, h * factor, w * factor], out)?;
        let rg = self.requires_grad(x);
        Ok(self.push(t, Op::Upsample { x, factor, scale }, rg))
    }

    /// Scalar `Σ sqrt((pred - target)² + eps²)` over all elements.
    pub fn charbonnier_sum(&mut self, pred: Var, target: Var, eps: f32) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return domain_err!("charbonnier shapes {:?} vs {:?}", p.shape(), t.shape());
        }
        let e2 = (eps as f64) * (eps as f64);
        let s: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                (d * d + e2).sqrt()
            })
            .sum();
        let rg = self.grad_any(&[pred, target]);
        Ok(self.push(
            Tensor::full(&[1], s as f32),
            Op::Charbonnier { pred, target, eps },
            rg,
        ))
    }

    /// Gradients of the scalar `loss` w.r.t. every leaf on a trainable path.
    ///
    /// Intermediate gradients are released as soon as they have been
    /// propagated, so only leaves appear in the result.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return domain_err!("backward needs a scalar, got shape {:?}", self.value(loss).shape());
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            for (v, gv) in self.local_grads(node, &g)? {
                accumulate(&mut grads[v.0], gv);
            }
        }
        Ok(Grads { grads })
    }

    fn local_grads(&self, node: &Node<'_>, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let xv = self.value(*x);
                let (c_in, h, wd) = xv.chw();
                let wv = self.value(*w);
                let c_out = wv.shape()[0];
                let grads = conv::conv2d_backward(
                    xv.data(),
                    (c_in, h, wd),
                    wv.data(),
                    c_out,
                    *geom,
                    g.data(),
                    self.requires_grad(*x),
                );
                if let Some(gi) = grads.input {
                    out.push((*x, Tensor::new(xv.shape().to_vec(), gi)?));
                }
                if self.requires_grad(*w) {
                    out.push((*w, Tensor::new(wv.shape().to_vec(), grads.weight)?));
                }
                if self.requires_grad(*b) {
                    out.push((*b, Tensor::new(vec![c_out], grads.bias)?));
                }
            }
            Op::Deconv2d { x, w, b } => {
                let xv = self.value(*x);
                let (c_in, h, wd) = xv.chw();
                let wv = self.value(*w);
                let c_out = wv.shape()[1];
                let grads = conv::deconv2d_backward(
                    xv.data(),
                    (c_in, h, wd),
                    wv.data(),
                    c_out,
                    g.data(),
                    self.requires_grad(*x),
                );
                if let Some(gi) = grads.input {
                    out.push((*x, Tensor::new(xv.shape().to_vec(), gi)?));
                }
                if self.requires_grad(*w) {
                    out.push((*w, Tensor::new(wv.shape().to_vec(), grads.weight)?));
                }
                if self.requires_grad(*b) {
                    out.push((*b, Tensor::new(vec![c_out], grads.bias)?));
                }
            }
            Op::Relu { x } => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &yv)| if yv > 0.0 { gv } else { 0.0 })
                    .collect();
                out.push((*x, Tensor::new(g.shape().to_vec(), data)?));
            }
            Op::Concat { parts } => {
                let mut start = 0;
                for p in parts {
                    let c = self.value(*p).shape()[0];
                    if self.requires_grad(*p) {
                        out.push((*p, g.channel_range(start, c)));
                    }
                    start += c;
                }
            }
            Op::Crop { x } => {
                let (c, sh, sw) = self.value(*x).chw();
                let (_, h, w) = g.chw();
                let mut full = Tensor::zeros(&[c, sh, sw]);
                for ci in 0..c {
                    for y in 0..h {
                        let dst = (ci * sh + y) * sw;
                        let src = (ci * h + y) * w;
                        full.data_mut()[dst..dst + w].copy_from_slice(&g.data()[src..src + w]);
                    }
                }
                out.push((*x, full));
            }
            Op::Warp { src, flow } => {
                let sv = self.value(*src);
                let fv = self.value(*flow);
                let (gs, gf) = sample::warp_backward(
                    sv.data(),
                    sv.chw(),
                    fv.data(),
                    g.data(),
                    self.requires_grad(*src),
                    self.requires_grad(*flow),
                );
                if let Some(gs) = gs {
                    out.push((*src, Tensor::new(sv.shape().to_vec(), gs)?));
                }
                if let Some(gf) = gf {
                    out.push((*flow, Tensor::new(fv.shape().to_vec(), gf)?));
                }
            }
            Op::Upsample { x, factor, scale } => {
                let xv = self.value(*x);
                let gi = sample::upsample_backward(xv.chw(), *factor, *scale, g.data());
                out.push((*x, Tensor::new(xv.shape().to_vec(), gi)?));
            }
            Op::Charbonnier { pred, target, eps } => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let upstream = g.data()[0] as f64;
                let e2 = (*eps as f64) * (*eps as f64);
                let d: Vec<f32> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&a, &b)| {
                        let d = a as f64 - b as f64;
                        (upstream * d / (d * d + e2).sqrt()) as f32
                    })
                    .collect();
                if self.requires_grad(*target) {
                    out.push((*target, Tensor::new(p.shape().to_vec(), d.iter().map(|v| -v).collect())?));
                }
                if self.requires_grad(*pred) {
                    out.push((*pred, Tensor::new(p.shape().to_vec(), d)?));
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Result of [`Graph::backward`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}
