//! Dense row-major `f32` arrays.
//!
//! Rasters use the `(channels, height, width)` layout, convolution weights
//! `(out, in, kh, kw)` and transposed-convolution weights `(in, out, kh, kw)`.

use crate::error::{domain_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return domain_err!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n,
                data.len()
            );
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Builds a `(c, h, w)` raster from a per-pixel function.
    pub fn from_chw(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(ci, y, x));
                }
            }
        }
        Self {
            shape: vec![c, h, w],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    ///
    /// Panics if the tensor is not rank 3; callers validate rank at API
    /// boundaries with [`Tensor::expect_chw`].
    pub fn chw(&self) -> (usize, usize, usize) {
        assert_eq!(self.shape.len(), 3, "expected a (c, h, w) tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn expect_chw(&self) -> Result<(usize, usize, usize)> {
        if self.shape.len() != 3 {
            return domain_err!("expected a (c, h, w) raster, got shape {:?}", self.shape);
        }
        Ok(self.chw())
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let (_, h, w) = self.chw();
        &self.data[c * h * w..(c + 1) * h * w]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let (_, h, w) = self.chw();
        &mut self.data[c * h * w..(c + 1) * h * w]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        let (_, h, w) = self.chw();
        self.data[(c * h + y) * w + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f32) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Copies the window `[y0, y0 + h) × [x0, x0 + w)` of a raster.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Self {
        let (c, sh, sw) = self.chw();
        assert!(y0 + h <= sh && x0 + w <= sw, "crop window out of bounds");
        let mut out = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for y in 0..h {
                let row = (ci * sh + y0 + y) * sw + x0;
                out.extend_from_slice(&self.data[row..row + w]);
            }
        }
        Self {
            shape: vec![c, h, w],
            data: out,
        }
    }

    /// Concatenates rasters of identical spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return domain_err!("cannot concatenate zero tensors");
        };
        let (_, h, w) = first.expect_chw()?;
        let mut c_total = 0;
        for p in parts {
            let (c, ph, pw) = p.expect_chw()?;
            if (ph, pw) != (h, w) {
                return domain_err!("concat of {}x{} with {}x{}", h, w, ph, pw);
            }
            c_total += c;
        }
        let mut data = Vec::with_capacity(c_total * h * w);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: vec![c_total, h, w],
            data,
        })
    }

    /// Splits off channels `[start, start + count)`.
    pub fn channel_range(&self, start: usize, count: usize) -> Self {
        let (_, h, w) = self.chw();
        Self {
            shape: vec![count, h, w],
            data: self.data[start * h * w..(start + count) * h * w].to_vec(),
        }
    }
}
