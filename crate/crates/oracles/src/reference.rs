//! Brute-force f64 computations used as oracles. Nothing here calls into the
//! crate under test; inputs and outputs are plain `Vec<f64>` planes.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// A `(c, h, w)` array of f64 values.
#[derive(Clone, Debug, PartialEq)]
pub struct Planes {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Planes {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_fn(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(ci, y, x));
                }
            }
        }
        Self { c, h, w, data }
    }

    pub fn from_f32(c: usize, h: usize, w: usize, v: &[f32]) -> Self {
        assert_eq!(v.len(), c * h * w);
        Self {
            c,
            h,
            w,
            data: v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.h + y) * self.w + x] = v;
    }

    /// Value at integer position with coordinates clamped into the raster.
    pub fn clamped(&self, c: usize, y: i64, x: i64) -> f64 {
        let y = y.clamp(0, self.h as i64 - 1) as usize;
        let x = x.clamp(0, self.w as i64 - 1) as usize;
        self.at(c, y, x)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// Bilinear interpolation at `(x, y)`, position clamped to the raster first.
pub fn bilinear(src: &Planes, c: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (src.w - 1) as f64);
    let y = y.clamp(0.0, (src.h - 1) as f64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let v00 = src.clamped(c, y0, x0);
    let v01 = src.clamped(c, y0, x0 + 1);
    let v10 = src.clamped(c, y0 + 1, x0);
    let v11 = src.clamped(c, y0 + 1, x0 + 1);
    v00 * (1.0 - fx) * (1.0 - fy) + v01 * fx * (1.0 - fy) + v10 * (1.0 - fx) * fy + v11 * fx * fy
}

/// `out(c, y, x) = src(c, y + v, x + u)` with `flow` holding `u` then `v`.
pub fn warp(src: &Planes, flow: &Planes) -> Planes {
    assert_eq!((flow.c, flow.h, flow.w), (2, src.h, src.w));
    Planes::from_fn(src.c, src.h, src.w, |c, y, x| {
        bilinear(src, c, x as f64 + flow.at(0, y, x), y as f64 + flow.at(1, y, x))
    })
}

/// Bilinear upsampling with half-pixel centres and clamped borders.
pub fn upsample(src: &Planes, factor: usize, value_scale: f64) -> Planes {
    let f = factor as f64;
    Planes::from_fn(src.c, src.h * factor, src.w * factor, |c, y, x| {
        let sx = (x as f64 + 0.5) / f - 0.5;
        let sy = (y as f64 + 0.5) / f - 0.5;
        value_scale * bilinear(src, c, sx, sy)
    })
}

/// Convolution with edge-replicated "same" padding; `w` is `(c_out, c_in, k, k)` flattened.
pub fn conv2d(x: &Planes, w: &[f64], b: &[f64], c_out: usize, k: usize, stride: usize) -> Planes {
    let p = (k - 1) / 2;
    let oh = (x.h + 2 * p - k) / stride + 1;
    let ow = (x.w + 2 * p - k) / stride + 1;
    Planes::from_fn(c_out, oh, ow, |co, oy, ox| {
        let mut s = b[co];
        for ci in 0..x.c {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride + ky) as i64 - p as i64;
                    let ix = (ox * stride + kx) as i64 - p as i64;
                    s += w[((co * x.c + ci) * k + ky) * k + kx] * x.clamped(ci, iy, ix);
                }
            }
        }
        s
    })
}

pub fn relu(x: &Planes) -> Planes {
    Planes {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..x.clone()
    }
}

pub fn charbonnier(d: f64, eps: f64) -> f64 {
    (d * d + eps * eps).sqrt()
}

/// Finite-difference slope of the Charbonnier penalty at `d`.
pub fn charbonnier_slope_fd(d: f64, eps: f64) -> f64 {
    let h = 1e-7;
    (charbonnier(d + h, eps) - charbonnier(d - h, eps)) / (2.0 * h)
}

pub fn charbonnier_total(a: &Planes, b: &Planes, eps: f64) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| charbonnier(x - y, eps)).sum()
}

/// Mean squared error written out directly.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    s / a.len() as f64
}

/// Per-window SSIM factors averaged over every valid 11×11 window and channel.
/// Each window is summed directly with the 2-D Gaussian weights.
#[derive(Clone, Copy, Debug)]
pub struct SsimTerms {
    pub ssim: f64,
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

pub fn ssim_terms(a: &Planes, b: &Planes) -> SsimTerms {
    const N: usize = 11;
    let sigma = 1.5f64;
    let mut g = [[0.0f64; N]; N];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let c3 = c2 / 2.0;
    let mut acc = [0.0; 4];
    let mut n = 0.0;
    for c in 0..a.c {
        for y0 in 0..=a.h - N {
            for x0 in 0..=a.w - N {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..N {
                    for j in 0..N {
                        let wgt = g[i][j] / total;
                        let (p, q) = (a.at(c, y0 + i, x0 + j), b.at(c, y0 + i, x0 + j));
                        ma += wgt * p;
                        mb += wgt * q;
                        saa += wgt * p * p;
                        sbb += wgt * q * q;
                        sab += wgt * p * q;
                    }
                }
                let va = (saa - ma * ma).max(0.0);
                let vb = (sbb - mb * mb).max(0.0);
                let cov = sab - ma * mb;
                let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                let con = (2.0 * va.sqrt() * vb.sqrt() + c2) / (va + vb + c2);
                let s = (cov + c3) / (va.sqrt() * vb.sqrt() + c3);
                acc[0] += l * (2.0 * cov + c2) / (va + vb + c2);
                acc[1] += l;
                acc[2] += con;
                acc[3] += s;
                n += 1.0;
            }
        }
    }
    SsimTerms {
        ssim: acc[0] / n,
        luminance: acc[1] / n,
        contrast: acc[2] / n,
        structure: acc[3] / n,
    }
}

/// Magnitude of FFT bin `k` of a real signal, normalised by its length.
pub fn fft_amplitude(signal: &[f64], k: usize) -> f64 {
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf[k].norm() / signal.len() as f64
}

/// Hue in degrees of an RGB colour, standard hexcone model.
pub fn rgb_hue(r: f64, g: f64, b: f64) -> Option<f64> {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d <= 1e-12 {
        return None;
    }
    let h = if max == r {
        60.0 * ((g - b) / d)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    Some(h.rem_euclid(360.0))
}

/// Smallest angle between two hues in degrees.
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Circular mean of angles in degrees, each weighted.
pub fn circular_mean(angles: &[(f64, f64)]) -> Option<f64> {
    let (mut s, mut c) = (0.0, 0.0);
    for &(a, wgt) in angles {
        s += wgt * a.to_radians().sin();
        c += wgt * a.to_radians().cos();
    }
    if s.abs() + c.abs() < 1e-12 {
        return None;
    }
    Some(s.atan2(c).to_degrees().rem_euclid(360.0))
}

/// Largest |z| of observed category counts against a uniform multinomial.
pub fn max_multinomial_z(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let p = 1.0 / counts.len() as f64;
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    counts.iter().map(|&k| (k as f64 - mean).abs() / sd).fold(0.0, f64::max)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_midpoint() {
        let p = Planes::from_fn(1, 2, 2, |_, y, x| [[1.0, 2.0], [3.0, 5.0]][y][x]);
        assert_eq!(bilinear(&p, 0, 0.5, 0.5), 2.75);
    }

    #[test]
    fn hue_wheel() {
        assert_eq!(rgb_hue(1.0, 0.0, 0.0), Some(0.0));
        assert_eq!(rgb_hue(0.0, 1.0, 1.0), Some(180.0));
        assert_eq!(rgb_hue(0.5, 0.5, 0.5), None);
        assert_eq!(hue_distance(350.0, 10.0), 20.0);
    }

    #[test]
    fn fft_bin_of_cosine() {
        let s: Vec<f64> = (0..64).map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / 64.0).cos()).collect();
        assert!((fft_amplitude(&s, 5) - 0.5).abs() < 1e-12);
        assert!(fft_amplitude(&s, 6) < 1e-12);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Planes::from_fn(1, 4, 5, |_, y, x| (y * 5 + x) as f64);
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        assert_eq!(conv2d(&x, &w, &[0.0], 1, 3, 1), x);
        let s2 = conv2d(&x, &w, &[0.0], 1, 3, 2);
        assert_eq!((s2.h, s2.w), (2, 3));
        assert_eq!(s2.at(0, 1, 2), x.at(0, 2, 4));
    }
}
