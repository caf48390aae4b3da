//! Convolution and transposed convolution with edge-replicated borders.
//!
//! Both operators read out-of-range input pixels from the nearest edge pixel
//! instead of zero. On a constant input every output pixel of a convolution is
//! therefore identical, and a transposed convolution produces a pattern that
//! depends only on output parity. Tiled inference relies on this.

use super::gemm::{sgemm, MatRef};

/// Upper bound on the elements in one im2col buffer.
const CHUNK_ELEMS: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        (
            (h + 2 * p - self.kernel) / self.stride + 1,
            (w + 2 * p - self.kernel) / self.stride + 1,
        )
    }
}

/// Clamped source index for every (tap, output position) pair along one axis.
fn index_table(len_in: usize, len_out: usize, geom: ConvGeom) -> Vec<usize> {
    let p = geom.pad() as isize;
    let mut t = Vec::with_capacity(geom.kernel * len_out);
    for k in 0..geom.kernel as isize {
        for o in 0..len_out as isize {
            let i = o * geom.stride as isize + k - p;
            t.push(i.clamp(0, len_in as isize - 1) as usize);
        }
    }
    t
}

struct ConvPlan {
    c_in: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    geom: ConvGeom,
    ys: Vec<usize>,
    xs: Vec<usize>,
}

impl ConvPlan {
    fn new(c_in: usize, h: usize, w: usize, geom: ConvGeom) -> Self {
        let (ho, wo) = geom.out_size(h, w);
        Self {
            c_in,
            h,
            w,
            ho,
            wo,
            geom,
            ys: index_table(h, ho, geom),
            xs: index_table(w, wo, geom),
        }
    }

    fn k_dim(&self) -> usize {
        self.c_in * self.geom.kernel * self.geom.kernel
    }

    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let rows = (CHUNK_ELEMS / (self.k_dim() * self.wo)).max(1);
        let ho = self.ho;
        (0..ho).step_by(rows).map(move |r0| (r0, (r0 + rows).min(ho)))
    }

    fn im2col(&self, input: &[f32], r0: usize, r1: usize, col: &mut Vec<f32>) {
        let k = self.geom.kernel;
        let p = (r1 - r0) * self.wo;
        col.clear();
        col.resize(self.k_dim() * p, 0.0);
        let mut dst = 0;
        for ci in 0..self.c_in {
            let plane = &input[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let xs = &self.xs[kx * self.wo..(kx + 1) * self.wo];
                    for oy in r0..r1 {
                        let row = &plane[self.ys[ky * self.ho + oy] * self.w..][..self.w];
                        let out = &mut col[dst..dst + self.wo];
                        for (o, &ix) in out.iter_mut().zip(xs) {
                            *o = row[ix];
                        }
                        dst += self.wo;
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f32], r0: usize, r1: usize, grad_input: &mut [f32]) {
        let k = self.geom.kernel;
        let mut src = 0;
        for ci in 0..self.c_in {
            let plane = &mut grad_input[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let xs = &self.xs[kx * self.wo..(kx + 1) * self.wo];
                    for oy in r0..r1 {
                        let row = &mut plane[self.ys[ky * self.ho + oy] * self.w..][..self.w];
                        for (&g, &ix) in col[src..src + self.wo].iter().zip(xs) {
                            row[ix] += g;
                        }
                        src += self.wo;
                    }
                }
            }
        }
    }
}

/// Forward convolution. `weight` is `(c_out, c_in, k, k)`; returns `(c_out, ho, wo)` data.
pub fn conv2d_forward(
    input: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    bias: &[f32],
    c_out: usize,
    geom: ConvGeom,
) -> (Vec<f32>, usize, usize) {
    if shifted::suits(h, w, geom) {
        return (shifted::forward(input, (c_in, h, w), weight, bias, c_out, geom.kernel), h, w);
    }
    let plan = ConvPlan::new(c_in, h, w, geom);
    let (ho, wo) = (plan.ho, plan.wo);
    let plane = ho * wo;
    let mut out = vec![0.0f32; c_out * plane];
    for (o, b) in bias.iter().enumerate() {
        out[o * plane..(o + 1) * plane].fill(*b);
    }
    let kd = plan.k_dim();
    let mut col = Vec::new();
    for (r0, r1) in plan.chunks() {
        plan.im2col(input, r0, r1, &mut col);
        let p = (r1 - r0) * wo;
        sgemm(
            c_out,
            kd,
            p,
            1.0,
            MatRef::new(weight, 0, kd, 1),
            MatRef::new(&col, 0, p, 1),
            1.0,
            &mut out,
            r0 * wo,
            plane,
            1,
        );
    }
    (out, ho, wo)
}

pub struct ConvGrads {
    pub input: Option<Vec<f32>>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Backward convolution given the upstream gradient `grad_out` of shape `(c_out, ho, wo)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    input: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    c_out: usize,
    geom: ConvGeom,
    grad_out: &[f32],
    need_input_grad: bool,
) -> ConvGrads {
    if shifted::suits(h, w, geom) {
        return shifted::backward(input, (c_in, h, w), weight, c_out, geom.kernel, grad_out, need_input_grad);
    }
    let plan = ConvPlan::new(c_in, h, w, geom);
    let (ho, wo) = (plan.ho, plan.wo);
    let plane = ho * wo;
    let kd = plan.k_dim();

    let bias: Vec<f32> = grad_out
        .chunks_exact(plane)
        .map(|g| g.iter().map(|&v| v as f64).sum::<f64>() as f32)
        .collect();
    let mut gw = vec![0.0f32; c_out * kd];
    let mut gin = need_input_grad.then(|| vec![0.0f32; c_in * h * w]);
    let mut col = Vec::new();
    let mut gcol = Vec::new();
    for (r0, r1) in plan.chunks() {
        plan.im2col(input, r0, r1, &mut col);
        let p = (r1 - r0) * wo;
        // dW += dY (c_out × p) · colᵀ (p × kd)
        sgemm(
            c_out,
            p,
            kd,
            1.0,
            MatRef::new(grad_out, r0 * wo, plane, 1),
            MatRef::new(&col, 0, 1, p),
            1.0,
            &mut gw,
            0,
            kd,
            1,
        );
        if let Some(gin) = gin.as_mut() {
            gcol.clear();
            gcol.resize(kd * p, 0.0);
            // dcol = Wᵀ (kd × c_out) · dY (c_out × p)
            sgemm(
                kd,
                c_out,
                p,
                1.0,
                MatRef::new(weight, 0, 1, kd),
                MatRef::new(grad_out, r0 * wo, plane, 1),
                0.0,
                &mut gcol,
                0,
                p,
                1,
            );
            plan.col2im(&gcol, r0, r1, gin);
        }
    }
    ConvGrads {
        input: gin,
        weight: gw,
        bias,
    }
}

/// Stride-1 convolution as one GEMM per tap over an edge-padded copy of the
/// input. Output rows are computed at the padded width and the extra columns
/// dropped, which avoids materialising im2col buffers.
mod shifted {
    use super::{sgemm, ConvGeom, ConvGrads, MatRef};

    /// Small rasters go through im2col, where the weight matrix stays contiguous.
    pub(super) fn suits(h: usize, w: usize, geom: ConvGeom) -> bool {
        geom.stride == 1 && h * w >= 256
    }

    struct Layout {
        h: usize,
        w: usize,
        p: usize,
        wp: usize,
        plane: usize,
    }

    impl Layout {
        fn new(h: usize, w: usize, k: usize) -> Self {
            let p = (k - 1) / 2;
            Self {
                h,
                w,
                p,
                wp: w + 2 * p,
                plane: (h + 2 * p) * (w + 2 * p),
            }
        }

        /// Columns of the padded-width output.
        fn n(&self) -> usize {
            self.h * self.wp
        }

        /// Padded copy with `2p` trailing slack so every tap view stays in bounds.
        fn pad(&self, input: &[f32], c: usize) -> Vec<f32> {
            let (h, w, p) = (self.h, self.w, self.p);
            let mut v = Vec::with_capacity(c * self.plane + 2 * p);
            for ci in 0..c {
                let src = &input[ci * h * w..(ci + 1) * h * w];
                for yp in 0..h + 2 * p {
                    let y = yp.saturating_sub(p).min(h - 1);
                    let row = &src[y * w..(y + 1) * w];
                    v.extend(std::iter::repeat_n(row[0], p));
                    v.extend_from_slice(row);
                    v.extend(std::iter::repeat_n(row[w - 1], p));
                }
            }
            v.resize(c * self.plane + 2 * p, 0.0);
            v
        }

        /// Adjoint of [`Layout::pad`].
        fn fold(&self, padded: &[f32], c: usize) -> Vec<f32> {
            let (h, w, p) = (self.h, self.w, self.p);
            let mut g = vec![0.0f32; c * h * w];
            for ci in 0..c {
                let dst = &mut g[ci * h * w..(ci + 1) * h * w];
                for yp in 0..h + 2 * p {
                    let y = yp.saturating_sub(p).min(h - 1);
                    let src = &padded[ci * self.plane + yp * self.wp..][..self.wp];
                    let row = &mut dst[y * w..(y + 1) * w];
                    row[0] += src[..p].iter().sum::<f32>();
                    row[w - 1] += src[p + w..].iter().sum::<f32>();
                    for (r, s) in row.iter_mut().zip(&src[p..p + w]) {
                        *r += s;
                    }
                }
            }
            g
        }
    }

    pub(super) fn forward(
        input: &[f32],
        (c_in, h, w): (usize, usize, usize),
        weight: &[f32],
        bias: &[f32],
        c_out: usize,
        k: usize,
    ) -> Vec<f32> {
        let l = Layout::new(h, w, k);
        let xp = l.pad(input, c_in);
        let n = l.n();
        let mut outp = vec![0.0f32; c_out * n];
        for ky in 0..k {
            for kx in 0..k {
                sgemm(
                    c_out,
                    c_in,
                    n,
                    1.0,
                    MatRef::new(weight, ky * k + kx, c_in * k * k, k * k),
                    MatRef::new(&xp, ky * l.wp + kx, l.plane, 1),
                    1.0,
                    &mut outp,
                    0,
                    n,
                    1,
                );
            }
        }
        let mut out = Vec::with_capacity(c_out * h * w);
        for (co, b) in bias.iter().enumerate() {
            for y in 0..h {
                out.extend(outp[co * n + y * l.wp..][..w].iter().map(|v| v + b));
            }
        }
        out
    }

    pub(super) fn backward(
        input: &[f32],
        (c_in, h, w): (usize, usize, usize),
        weight: &[f32],
        c_out: usize,
        k: usize,
        grad_out: &[f32],
        need_input_grad: bool,
    ) -> ConvGrads {
        let l = Layout::new(h, w, k);
        let n = l.n();
        let xp = l.pad(input, c_in);
        // Upstream gradient at padded width, zero in the dropped columns.
        let mut gp = vec![0.0f32; c_out * n];
        for co in 0..c_out {
            for y in 0..h {
                gp[co * n + y * l.wp..][..w].copy_from_slice(&grad_out[(co * h + y) * w..][..w]);
            }
        }
        let bias = grad_out
            .chunks_exact(h * w)
            .map(|g| g.iter().map(|&v| v as f64).sum::<f64>() as f32)
            .collect();
        let kk = k * k;
        let mut gw = vec![0.0f32; c_out * c_in * kk];
        // Position-major copy of the padded input, so each tap's patch matrix
        // is a plain row-major view.
        let rows = l.plane + 2 * l.p;
        let mut xt = vec![0.0f32; rows * c_in];
        for ci in 0..c_in {
            for (r, v) in xp[ci * l.plane..][..rows.min(xp.len() - ci * l.plane)].iter().enumerate() {
                xt[r * c_in + ci] = *v;
            }
        }
        let mut gxp = need_input_grad.then(|| vec![0.0f32; c_in * l.plane + 2 * l.p]);
        for ky in 0..k {
            for kx in 0..k {
                let tap = ky * k + kx;
                let shift = ky * l.wp + kx;
                // dW[:, :, tap] = dY (c_out × n) · Xtap (n × c_in)
                sgemm(
                    c_out,
                    n,
                    c_in,
                    1.0,
                    MatRef::new(&gp, 0, n, 1),
                    MatRef::new(&xt, shift * c_in, c_in, 1),
                    0.0,
                    &mut gw,
                    tap,
                    c_in * kk,
                    kk,
                );
                if let Some(gxp) = gxp.as_mut() {
                    // dXtap (c_in × n) += W[:, :, tap]ᵀ (c_in × c_out) · dY
                    sgemm(
                        c_in,
                        c_out,
                        n,
                        1.0,
                        MatRef::new(weight, tap, kk, c_in * kk),
                        MatRef::new(&gp, 0, n, 1),
                        1.0,
                        gxp,
                        shift,
                        l.plane,
                        1,
                    );
                }
            }
        }
        ConvGrads {
            input: gxp.map(|g| l.fold(&g, c_in)),
            weight: gw,
            bias,
        }
    }
}

/// Kernel size of the transposed convolution (stride 2, exact doubling).
pub const DECONV_KERNEL: usize = 4;

struct DeconvPlan {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    /// Virtual (edge-replicated, one-pixel border) input size.
    hv: usize,
    wv: usize,
}

impl DeconvPlan {
    fn new(c_in: usize, c_out: usize, h: usize, w: usize) -> Self {
        Self {
            c_in,
            c_out,
            h,
            w,
            hv: h + 2,
            wv: w + 2,
        }
    }

    fn n_taps(&self) -> usize {
        self.c_out * DECONV_KERNEL * DECONV_KERNEL
    }

    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let rows = (CHUNK_ELEMS / (self.n_taps() * self.wv)).max(1);
        let hv = self.hv;
        (0..hv).step_by(rows).map(move |r0| (r0, (r0 + rows).min(hv)))
    }

    fn pad_input(&self, input: &[f32]) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.c_in * self.hv * self.wv);
        for ci in 0..self.c_in {
            let plane = &input[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for yv in 0..self.hv {
                let y = yv.saturating_sub(1).min(self.h - 1);
                let row = &plane[y * self.w..(y + 1) * self.w];
                v.push(row[0]);
                v.extend_from_slice(row);
                v.push(row[self.w - 1]);
            }
        }
        v
    }

    fn fold_padded(&self, padded: &[f32]) -> Vec<f32> {
        let mut g = vec![0.0f32; self.c_in * self.h * self.w];
        for ci in 0..self.c_in {
            let dst = &mut g[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for yv in 0..self.hv {
                let y = yv.saturating_sub(1).min(self.h - 1);
                let src = &padded[(ci * self.hv + yv) * self.wv..][..self.wv];
                let row = &mut dst[y * self.w..(y + 1) * self.w];
                row[0] += src[0];
                for (r, s) in row.iter_mut().zip(&src[1..self.wv - 1]) {
                    *r += s;
                }
                row[self.w - 1] += src[self.wv - 1];
            }
        }
        g
    }

    /// Output coordinate reached from virtual input index `iv` through tap `k`.
    #[inline]
    fn out_index(iv: usize, k: usize, len_out: usize) -> Option<usize> {
        let o = 2 * iv + k;
        (o >= 3 && o - 3 < len_out).then(|| o - 3)
    }
}

/// Transposed convolution, kernel 4, stride 2, output exactly `(2h, 2w)`.
/// `weight` is `(c_in, c_out, 4, 4)`.
pub fn deconv2d_forward(
    input: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    bias: &[f32],
    c_out: usize,
) -> Vec<f32> {
    let plan = DeconvPlan::new(c_in, c_out, h, w);
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; c_out * ho * wo];
    for (o, b) in bias.iter().enumerate() {
        out[o * ho * wo..(o + 1) * ho * wo].fill(*b);
    }
    let xv = plan.pad_input(input);
    let nt = plan.n_taps();
    let vplane = plan.hv * plan.wv;
    let mut cols = Vec::new();
    for (r0, r1) in plan.chunks() {
        let p = (r1 - r0) * plan.wv;
        cols.clear();
        cols.resize(nt * p, 0.0);
        // cols (taps × p) = Wᵀ (taps × c_in) · Xv (c_in × p)
        sgemm(
            nt,
            c_in,
            p,
            1.0,
            MatRef::new(weight, 0, 1, nt),
            MatRef::new(&xv, r0 * plan.wv, vplane, 1),
            0.0,
            &mut cols,
            0,
            p,
            1,
        );
        let mut src = 0;
        for co in 0..c_out {
            let oplane = &mut out[co * ho * wo..(co + 1) * ho * wo];
            for ky in 0..DECONV_KERNEL {
                for kx in 0..DECONV_KERNEL {
                    for yv in r0..r1 {
                        let row_src = &cols[src..src + plan.wv];
                        src += plan.wv;
                        let Some(oy) = DeconvPlan::out_index(yv, ky, ho) else {
                            continue;
                        };
                        let row = &mut oplane[oy * wo..(oy + 1) * wo];
                        for (xv_i, &v) in row_src.iter().enumerate() {
                            if let Some(ox) = DeconvPlan::out_index(xv_i, kx, wo) {
                                row[ox] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn deconv2d_backward(
    input: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    c_out: usize,
    grad_out: &[f32],
    need_input_grad: bool,
) -> ConvGrads {
    let plan = DeconvPlan::new(c_in, c_out, h, w);
    let (ho, wo) = (2 * h, 2 * w);
    let bias: Vec<f32> = grad_out
        .chunks_exact(ho * wo)
        .map(|g| g.iter().map(|&v| v as f64).sum::<f64>() as f32)
        .collect();
    let xv = plan.pad_input(input);
    let nt = plan.n_taps();
    let vplane = plan.hv * plan.wv;
    let mut gw = vec![0.0f32; c_in * nt];
    let mut gxv = need_input_grad.then(|| vec![0.0f32; c_in * vplane]);
    let mut gcols = Vec::new();
    for (r0, r1) in plan.chunks() {
        let p = (r1 - r0) * plan.wv;
        gcols.clear();
        gcols.resize(nt * p, 0.0);
        let mut dst = 0;
        for co in 0..c_out {
            let gplane = &grad_out[co * ho * wo..(co + 1) * ho * wo];
            for ky in 0..DECONV_KERNEL {
                for kx in 0..DECONV_KERNEL {
                    for yv in r0..r1 {
                        let row_dst = &mut gcols[dst..dst + plan.wv];
                        dst += plan.wv;
                        let Some(oy) = DeconvPlan::out_index(yv, ky, ho) else {
                            continue;
                        };
                        let row = &gplane[oy * wo..(oy + 1) * wo];
                        for (xv_i, d) in row_dst.iter_mut().enumerate() {
                            if let Some(ox) = DeconvPlan::out_index(xv_i, kx, wo) {
                                *d = row[ox];
                            }
                        }
                    }
                }
            }
        }
        // dW (c_in × taps) += Xv (c_in × p) · gcolsᵀ (p × taps)
        sgemm(
            c_in,
            p,
            nt,
            1.0,
            MatRef::new(&xv, r0 * plan.wv, vplane, 1),
            MatRef::new(&gcols, 0, 1, p),
            1.0,
            &mut gw,
            0,
            nt,
            1,
        );
        if let Some(gxv) = gxv.as_mut() {
            // dXv (c_in × p) = W (c_in × taps) · gcols (taps × p)
            sgemm(
                c_in,
                nt,
                p,
                1.0,
                MatRef::new(weight, 0, nt, 1),
                MatRef::new(&gcols, 0, p, 1),
                0.0,
                gxv,
                r0 * plan.wv,
                vplane,
                1,
            );
        }
    }
    ConvGrads {
        input: gxv.map(|g| plan.fold_padded(&g)),
        weight: gw,
        bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(n: usize, seed: u64) -> Vec<f32> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 40) as f32 / (1u64 << 24) as f32) - 0.5
            })
            .collect()
    }

    fn clampi(i: isize, n: usize) -> usize {
        i.clamp(0, n as isize - 1) as usize
    }

    /// Direct definition: `y[o] = b + Σ w · x[clamp(o·s + t - p)]`.
    fn naive_conv(x: &[f32], (c, h, w): (usize, usize, usize), wt: &[f32], b: &[f32], co: usize, g: ConvGeom) -> Vec<f64> {
        let (ho, wo) = g.out_size(h, w);
        let (k, p) = (g.kernel, g.pad() as isize);
        let mut y = vec![0.0f64; co * ho * wo];
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[o] as f64;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = clampi((oy * g.stride + ky) as isize - p, h);
                                let ix = clampi((ox * g.stride + kx) as isize - p, w);
                                acc += wt[((o * c + ci) * k + ky) * k + kx] as f64 * x[(ci * h + iy) * w + ix] as f64;
                            }
                        }
                    }
                    y[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
        y
    }

    /// Transposed convolution of the one-pixel replicated input, cropped by 1
    /// on the left/top: `y[2i + t - 3] += w[t] · xv[i]`.
    fn naive_deconv(x: &[f32], (c, h, w): (usize, usize, usize), wt: &[f32], b: &[f32], co: usize) -> Vec<f64> {
        let (ho, wo) = (2 * h, 2 * w);
        let mut y = vec![0.0f64; co * ho * wo];
        for o in 0..co {
            y[o * ho * wo..(o + 1) * ho * wo].fill(b[o] as f64);
        }
        for ci in 0..c {
            for iy in 0..h + 2 {
                for ix in 0..w + 2 {
                    let v = x[(ci * h + clampi(iy as isize - 1, h)) * w + clampi(ix as isize - 1, w)] as f64;
                    for o in 0..co {
                        for ky in 0..4 {
                            for kx in 0..4 {
                                let (oy, ox) = (2 * iy + ky, 2 * ix + kx);
                                if oy < 3 || ox < 3 || oy - 3 >= ho || ox - 3 >= wo {
                                    continue;
                                }
                                y[(o * ho + oy - 3) * wo + ox - 3] += wt[((ci * co + o) * 4 + ky) * 4 + kx] as f64 * v;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn close(a: &[f32], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((*x as f64 - y).abs() < tol, "index {i}: {x} vs {y}");
        }
    }

    /// Gradients by linearity: with `L = Σ g·y`, `∂L/∂θ` is the directional
    /// response of the naive forward to a unit change of `θ`.
    fn naive_grad(f: &dyn Fn(&[f32], &[f32]) -> Vec<f64>, x: &[f32], wt: &[f32], g: &[f32]) -> (Vec<f64>, Vec<f64>) {
        let base: f64 = f(x, wt).iter().zip(g).map(|(y, g)| y * *g as f64).sum();
        let probe = |xs: &[f32], ws: &[f32]| -> f64 { f(xs, ws).iter().zip(g).map(|(y, g)| y * *g as f64).sum::<f64>() - base };
        let gx = (0..x.len())
            .map(|i| {
                let mut x2 = x.to_vec();
                x2[i] += 1.0;
                probe(&x2, wt)
            })
            .collect();
        let gw = (0..wt.len())
            .map(|i| {
                let mut w2 = wt.to_vec();
                w2[i] += 1.0;
                probe(x, &w2)
            })
            .collect();
        (gx, gw)
    }

    #[test]
    fn conv_matches_direct_definition() {
        for &(c, h, w, co, k, s) in &[(3, 7, 9, 4, 3, 1), (2, 8, 6, 3, 5, 2), (3, 9, 9, 2, 7, 2), (4, 5, 6, 20, 5, 1), (2, 3, 3, 18, 3, 2)] {
            let g = ConvGeom { kernel: k, stride: s };
            let x = fill(c * h * w, 1);
            let wt = fill(co * c * k * k, 2);
            let b = fill(co, 3);
            let (y, ho, wo) = conv2d_forward(&x, (c, h, w), &wt, &b, co, g);
            assert_eq!((ho, wo), g.out_size(h, w));
            close(&y, &naive_conv(&x, (c, h, w), &wt, &b, co, g), 1e-4);

            let gy = fill(co * ho * wo, 4);
            let grads = conv2d_backward(&x, (c, h, w), &wt, co, g, &gy, true);
            let f = |xs: &[f32], ws: &[f32]| naive_conv(xs, (c, h, w), ws, &vec![0.0; co], co, g);
            let (gx, gw) = naive_grad(&f, &x, &wt, &gy);
            close(grads.input.as_ref().unwrap(), &gx, 1e-3);
            close(&grads.weight, &gw, 1e-3);
            let gb: Vec<f64> = gy.chunks(ho * wo).map(|c| c.iter().map(|&v| v as f64).sum()).collect();
            close(&grads.bias, &gb, 1e-4);
        }
    }

    #[test]
    fn deconv_matches_direct_definition() {
        for &(c, h, w, co) in &[(3, 4, 5, 2), (2, 1, 3, 3), (5, 3, 3, 1)] {
            let x = fill(c * h * w, 5);
            let wt = fill(c * co * 16, 6);
            let b = fill(co, 7);
            let y = deconv2d_forward(&x, (c, h, w), &wt, &b, co);
            close(&y, &naive_deconv(&x, (c, h, w), &wt, &b, co), 1e-4);

            let gy = fill(co * 4 * h * w, 8);
            let grads = deconv2d_backward(&x, (c, h, w), &wt, co, &gy, true);
            let f = |xs: &[f32], ws: &[f32]| naive_deconv(xs, (c, h, w), ws, &vec![0.0; co], co);
            let (gx, gw) = naive_grad(&f, &x, &wt, &gy);
            close(grads.input.as_ref().unwrap(), &gx, 1e-3);
            close(&grads.weight, &gw, 1e-3);
        }
    }

    #[test]
    fn constant_input_gives_constant_conv_output() {
        let x = vec![0.7f32; 3 * 10 * 12];
        let wt = fill(4 * 3 * 25, 9);
        let (y, _, _) = conv2d_forward(&x, (3, 10, 12), &wt, &[0.1; 4], 4, ConvGeom { kernel: 5, stride: 1 });
        for plane in y.chunks(120) {
            assert!(plane.iter().all(|v| (v - plane[0]).abs() < 1e-6));
        }
    }
}
