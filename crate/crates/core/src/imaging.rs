//! Pixel containers and the resampling primitives every other module builds on.
//!
//! Conventions: rasters are `(channels, height, width)`; flow channel 0 is the
//! horizontal displacement and channel 1 the vertical one, both in pixels of
//! the flow's own resolution, with the origin at the centre of the top-left
//! pixel. Warping is backward: each output pixel reads `src` at its own
//! position plus the flow. Reads outside the raster clamp to the nearest edge.

use crate::error::{domain_err, Result};
use crate::kernels::sample;
use crate::tensor::Tensor;

/// Number of pyramid halvings the network needs the input to survive.
pub const SIZE_MULTIPLE: usize = 32;

/// A real-valued `(c, h, w)` raster, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    data: Tensor,
}

impl Image {
    pub fn new(data: Tensor) -> Result<Self> {
        let (c, h, w) = data.expect_chw()?;
        if c == 0 || h == 0 || w == 0 {
            return domain_err!("image must be non-empty, got {}x{}x{}", c, h, w);
        }
        if !data.is_finite() {
            return domain_err!("image contains non-finite values");
        }
        Ok(Self { data })
    }

    pub fn constant(c: usize, h: usize, w: usize, value: f32) -> Self {
        Self {
            data: Tensor::full(&[c, h, w], value),
        }
    }

    pub fn from_fn(c: usize, h: usize, w: usize, f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        Self {
            data: Tensor::from_chw(c, h, w, f),
        }
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// `(height, width)`.
    pub fn size(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data.at(c, y, x)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Self {
        Self {
            data: self.data.crop(y0, x0, h, w),
        }
    }

    /// Values clamped to `[0, 1]`; used only at I/O boundaries.
    pub fn clamped(&self) -> Self {
        Self {
            data: self.data.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    /// Integer translation with edge-clamped fill:
    /// `out(y, x) = self(clamp(y + dy), clamp(x + dx))`.
    pub fn shifted(&self, dx: i64, dy: i64) -> Self {
        let (c, h, w) = self.data.chw();
        let cl = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
        Self::from_fn(c, h, w, |ci, y, x| {
            self.data.at(ci, cl(y as i64 + dy, h), cl(x as i64 + dx, w))
        })
    }
}

/// Per-pixel displacement field at pyramid scale `scale_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    data: Tensor,
    scale_index: usize,
}

impl FlowField {
    pub fn new(data: Tensor, scale_index: usize) -> Result<Self> {
        let (c, h, w) = data.expect_chw()?;
        if c != 2 || h == 0 || w == 0 {
            return domain_err!("flow must be 2 x H x W, got {}x{}x{}", c, h, w);
        }
        if !data.is_finite() {
            return domain_err!("flow contains non-finite values");
        }
        Ok(Self { data, scale_index })
    }

    pub fn constant(h: usize, w: usize, dx: f32, dy: f32, scale_index: usize) -> Self {
        Self {
            data: Tensor::from_chw(2, h, w, |c, _, _| if c == 0 { dx } else { dy }),
            scale_index,
        }
    }

    pub fn zeros(h: usize, w: usize, scale_index: usize) -> Self {
        Self::constant(h, w, 0.0, 0.0, scale_index)
    }

    pub fn scale_index(&self) -> usize {
        self.scale_index
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    /// `(horizontal, vertical)` displacement at `(y, x)`.
    /// Largest vector length.
    pub fn max_magnitude(&self) -> f32 {
        let (_, h, w) = self.data.chw();
        let d = self.data.data();
        (0..h * w).map(|k| d[k].hypot(d[h * w + k])).fold(0.0, f32::max)
    }

    /// Per-component median over the central `frac × frac` window.
    pub fn median_vector(&self, frac: f64) -> (f32, f32) {
        let (_, h, w) = self.data.chw();
        let (ch, cw) = (((h as f64 * frac).round() as usize).clamp(1, h), ((w as f64 * frac).round() as usize).clamp(1, w));
        let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
        let median = |c: usize| {
            let mut v: Vec<f32> = (y0..y0 + ch)
                .flat_map(|y| (x0..x0 + cw).map(move |x| (y, x)))
                .map(|(y, x)| self.data.at(c, y, x))
                .collect();
            v.sort_by(f32::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        };
        (median(0), median(1))
    }

    pub fn at(&self, y: usize, x: usize) -> (f32, f32) {
        (self.data.at(0, y, x), self.data.at(1, y, x))
    }
}

/// 64-channel encoder activation at pyramid scale `scale_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    data: Tensor,
    scale_index: usize,
}

impl FeatureMap {
    pub fn new(data: Tensor, scale_index: usize) -> Result<Self> {
        data.expect_chw()?;
        Ok(Self { data, scale_index })
    }

    pub fn scale_index(&self) -> usize {
        self.scale_index
    }

    pub fn size(&self) -> (usize, usize) {
        (self.data.shape()[1], self.data.shape()[2])
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }
}

/// Anything that can be resampled: images and feature maps.
pub trait Raster: Sized {
    fn tensor(&self) -> &Tensor;
    /// Rebuilds a raster of the same kind around resampled data.
    fn with_data(&self, data: Tensor) -> Self;
}

impl Raster for Image {
    fn tensor(&self) -> &Tensor {
        &self.data
    }
    fn with_data(&self, data: Tensor) -> Self {
        Self { data }
    }
}

impl Raster for FeatureMap {
    fn tensor(&self) -> &Tensor {
        &self.data
    }
    fn with_data(&self, data: Tensor) -> Self {
        Self {
            data,
            scale_index: self.scale_index,
        }
    }
}

impl Raster for Tensor {
    fn tensor(&self) -> &Tensor {
        self
    }
    fn with_data(&self, data: Tensor) -> Self {
        data
    }
}

/// Samples every channel of `src` at the absolute positions in `coords`
/// (`(2, H, W)`: x then y). Out-of-range positions clamp to the border.
pub fn bilinear_sample(src: &Tensor, coords: &Tensor) -> Result<Tensor> {
    let (c, h, w) = src.expect_chw()?;
    if src.is_empty() {
        return domain_err!("cannot sample an empty raster");
    }
    let (cc, oh, ow) = coords.expect_chw()?;
    if cc != 2 {
        return domain_err!("coords need 2 channels, got {}", cc);
    }
    if !coords.is_finite() {
        return domain_err!("coords contain non-finite values");
    }
    let plane = oh * ow;
    let (xs, ys) = coords.data().split_at(plane);
    let mut out = vec![0.0f32; c * plane];
    for i in 0..plane {
        let st = sample::Stencil::new(xs[i], ys[i], h, w);
        for ci in 0..c {
            out[ci * plane + i] = st.sample(src.channel(ci), w);
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Backward warp: `out(c, y, x) = src(c, y + flow_v(y, x), x + flow_h(y, x))`.
pub fn warp<R: Raster>(src: &R, flow: &FlowField) -> Result<R> {
    let t = src.tensor();
    let (c, h, w) = t.expect_chw()?;
    if flow.size() != (h, w) {
        return domain_err!(
            "flow is {}x{} but the raster is {}x{}",
            flow.height(),
            flow.width(),
            h,
            w
        );
    }
    let out = sample::warp_forward(t.data(), (c, h, w), flow.tensor().data());
    Ok(src.with_data(Tensor::new(vec![c, h, w], out)?))
}

/// Cubic convolution kernel with `a = -0.5`.
fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Normalised resampling taps `(first_index, weights)` for each output index.
/// Downscaling stretches the kernel by the inverse factor (antialiasing).
fn resample_taps(len_in: usize, len_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = len_out as f64 / len_in as f64;
    let stretch = (1.0 / scale).max(1.0);
    let support = 2.0 * stretch;
    (0..len_out)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for i in lo..=hi {
                let wgt = cubic((i as f64 - center) / stretch);
                if wgt == 0.0 {
                    continue;
                }
                let idx = i.clamp(0, len_in as i64 - 1) as usize;
                match taps.iter_mut().find(|(j, _)| *j == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Separable bicubic resampling of an arbitrary raster to `(out_h, out_w)`.
pub fn resize_to(src: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = src.expect_chw()?;
    if out_h == 0 || out_w == 0 {
        return domain_err!("resize target {}x{} is empty", out_h, out_w);
    }
    if (out_h, out_w) == (h, w) {
        return Ok(src.clone());
    }
    let tx = resample_taps(w, out_w);
    let ty = resample_taps(h, out_h);
    let mut tmp = vec![0.0f64; c * h * out_w];
    for ci in 0..c {
        let plane = src.channel(ci);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (ox, taps) in tx.iter().enumerate() {
                tmp[(ci * h + y) * out_w + ox] = taps.iter().map(|&(i, wt)| row[i] as f64 * wt).sum();
            }
        }
    }
    let mut out = vec![0.0f32; c * out_h * out_w];
    for ci in 0..c {
        for (oy, taps) in ty.iter().enumerate() {
            for ox in 0..out_w {
                let v: f64 = taps
                    .iter()
                    .map(|&(i, wt)| tmp[(ci * h + i) * out_w + ox] * wt)
                    .sum();
                out[(ci * out_h + oy) * out_w + ox] = v as f32;
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Bicubic (`a = -0.5`) resize by `factor`, antialiased when downscaling.
/// Output dimensions are `round(dim * factor)`.
pub fn resize_bicubic(src: &Image, factor: f64) -> Result<Image> {
    if !(factor.is_finite() && factor > 0.0) {
        return domain_err!("resize factor must be positive, got {}", factor);
    }
    let oh = (src.height() as f64 * factor).round() as usize;
    let ow = (src.width() as f64 * factor).round() as usize;
    if oh == 0 || ow == 0 {
        return domain_err!(
            "factor {} maps {}x{} to an empty image",
            factor,
            src.height(),
            src.width()
        );
    }
    Image::new(resize_to(src.tensor(), oh, ow)?)
}

/// What [`pad_to_multiple`] added, enough to undo it exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
    pub pad_bottom: usize,
    pub pad_right: usize,
}

impl CropRecord {
    pub fn is_empty(&self) -> bool {
        self.pad_bottom == 0 && self.pad_right == 0
    }

    pub fn undo<R: Raster>(&self, padded: &R) -> R {
        if self.is_empty() {
            return padded.with_data(padded.tensor().clone());
        }
        padded.with_data(padded.tensor().crop(0, 0, self.height, self.width))
    }
}

/// Mirror index without edge repetition, valid for any offset.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Reflection-pads the bottom and right edges up to multiples of `multiple`.
pub fn pad_to_multiple<R: Raster>(src: &R, multiple: usize) -> Result<(R, CropRecord)> {
    if multiple == 0 {
        return domain_err!("padding multiple must be positive");
    }
    let t = src.tensor();
    let (c, h, w) = t.expect_chw()?;
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    let record = CropRecord {
        height: h,
        width: w,
        pad_bottom: ph - h,
        pad_right: pw - w,
    };
    if record.is_empty() {
        return Ok((src.with_data(t.clone()), record));
    }
    let padded = Tensor::from_chw(c, ph, pw, |ci, y, x| t.at(ci, reflect(y, h), reflect(x, w)));
    Ok((src.with_data(padded), record))
}
