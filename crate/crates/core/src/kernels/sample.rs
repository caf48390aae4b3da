//! Bilinear sampling with clamp-to-edge borders.
//!
//! Coordinates are absolute pixel positions with the origin at the center of
//! the top-left pixel; `x` runs along columns, `y` along rows.

/// Interpolation stencil of one sample position.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f32,
    fy: f32,
    /// Whether the coordinate was inside the domain (clamping has zero slope outside).
    live_x: bool,
    live_y: bool,
}

impl Stencil {
    #[inline]
    pub(crate) fn new(px: f32, py: f32, h: usize, w: usize) -> Self {
        let (x0, x1, fx, live_x) = axis(px, w);
        let (y0, y1, fy, live_y) = axis(py, h);
        Self {
            x0,
            x1,
            y0,
            y1,
            fx,
            fy,
            live_x,
            live_y,
        }
    }

    #[inline]
    pub(crate) fn sample(&self, plane: &[f32], w: usize) -> f32 {
        let v00 = plane[self.y0 * w + self.x0];
        let v01 = plane[self.y0 * w + self.x1];
        let v10 = plane[self.y1 * w + self.x0];
        let v11 = plane[self.y1 * w + self.x1];
        let top = v00 + self.fx * (v01 - v00);
        let bottom = v10 + self.fx * (v11 - v10);
        top + self.fy * (bottom - top)
    }

    /// Partial derivatives of the sampled value w.r.t. `(px, py)`.
    #[inline]
    pub(crate) fn slope(&self, plane: &[f32], w: usize) -> (f32, f32) {
        let v00 = plane[self.y0 * w + self.x0];
        let v01 = plane[self.y0 * w + self.x1];
        let v10 = plane[self.y1 * w + self.x0];
        let v11 = plane[self.y1 * w + self.x1];
        let dx = if self.live_x {
            (1.0 - self.fy) * (v01 - v00) + self.fy * (v11 - v10)
        } else {
            0.0
        };
        let dy = if self.live_y {
            (1.0 - self.fx) * (v10 - v00) + self.fx * (v11 - v01)
        } else {
            0.0
        };
        (dx, dy)
    }

    /// Adds `g` into `plane` with the interpolation weights (adjoint of `sample`).
    #[inline]
    pub(crate) fn scatter(&self, plane: &mut [f32], w: usize, g: f32) {
        let (fx, fy) = (self.fx, self.fy);
        plane[self.y0 * w + self.x0] += g * (1.0 - fx) * (1.0 - fy);
        plane[self.y0 * w + self.x1] += g * fx * (1.0 - fy);
        plane[self.y1 * w + self.x0] += g * (1.0 - fx) * fy;
        plane[self.y1 * w + self.x1] += g * fx * fy;
    }
}

#[inline]
fn axis(p: f32, len: usize) -> (usize, usize, f32, bool) {
    let max = (len - 1) as f32;
    let live = (0.0..=max).contains(&p);
    let c = p.clamp(0.0, max);
    let i0 = (c.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, c - i0 as f32, live)
}

/// Backward warp: `out(c, y, x) = src(c, y + flow_v, x + flow_h)`.
pub fn warp_forward(src: &[f32], (c, h, w): (usize, usize, usize), flow: &[f32]) -> Vec<f32> {
    let plane = h * w;
    let mut out = vec![0.0f32; c * plane];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let s = Stencil::new(x as f32 + flow[i], y as f32 + flow[plane + i], h, w);
            for ci in 0..c {
                out[ci * plane + i] = s.sample(&src[ci * plane..(ci + 1) * plane], w);
            }
        }
    }
    out
}

/// Gradients of [`warp_forward`] w.r.t. `src` (if requested) and `flow`.
pub fn warp_backward(
    src: &[f32],
    (c, h, w): (usize, usize, usize),
    flow: &[f32],
    grad_out: &[f32],
    need_src_grad: bool,
    need_flow_grad: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let plane = h * w;
    let mut gsrc = need_src_grad.then(|| vec![0.0f32; c * plane]);
    let mut gflow = need_flow_grad.then(|| vec![0.0f32; 2 * plane]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let s = Stencil::new(x as f32 + flow[i], y as f32 + flow[plane + i], h, w);
            let (mut gx, mut gy) = (0.0f32, 0.0f32);
            for ci in 0..c {
                let g = grad_out[ci * plane + i];
                if g == 0.0 {
                    continue;
                }
                let sp = &src[ci * plane..(ci + 1) * plane];
                if gflow.is_some() {
                    let (dx, dy) = s.slope(sp, w);
                    gx += g * dx;
                    gy += g * dy;
                }
                if let Some(gs) = gsrc.as_mut() {
                    s.scatter(&mut gs[ci * plane..(ci + 1) * plane], w, g);
                }
            }
            if let Some(gf) = gflow.as_mut() {
                gf[i] = gx;
                gf[plane + i] = gy;
            }
        }
    }
    (gsrc, gflow)
}

/// Source coordinate of output index `o` under half-pixel-centred upsampling.
#[inline]
fn upsample_coord(o: usize, factor: usize) -> f32 {
    (o as f32 + 0.5) / factor as f32 - 0.5
}

/// Bilinear upsampling by an integer factor, values multiplied by `value_scale`.
pub fn upsample_forward(
    src: &[f32],
    (c, h, w): (usize, usize, usize),
    factor: usize,
    value_scale: f32,
) -> Vec<f32> {
    let (ho, wo) = (h * factor, w * factor);
    let mut out = vec![0.0f32; c * ho * wo];
    for oy in 0..ho {
        for ox in 0..wo {
            let s = Stencil::new(upsample_coord(ox, factor), upsample_coord(oy, factor), h, w);
            for ci in 0..c {
                out[(ci * ho + oy) * wo + ox] =
                    value_scale * s.sample(&src[ci * h * w..(ci + 1) * h * w], w);
            }
        }
    }
    out
}

pub fn upsample_backward(
    (c, h, w): (usize, usize, usize),
    factor: usize,
    value_scale: f32,
    grad_out: &[f32],
) -> Vec<f32> {
    let (ho, wo) = (h * factor, w * factor);
    let mut g = vec![0.0f32; c * h * w];
    for oy in 0..ho {
        for ox in 0..wo {
            let s = Stencil::new(upsample_coord(ox, factor), upsample_coord(oy, factor), h, w);
            for ci in 0..c {
                s.scatter(
                    &mut g[ci * h * w..(ci + 1) * h * w],
                    w,
                    value_scale * grad_out[(ci * ho + oy) * wo + ox],
                );
            }
        }
    }
    g
}
