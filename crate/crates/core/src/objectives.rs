//! Charbonnier training loss, PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::imaging::Image;
use crate::tensor::Tensor;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum over pixels and channels, mean over the batch.
    #[default]
    SumPixelsMeanBatch,
    /// Mean over every element.
    MeanAll,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f32,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            reduction: Reduction::SumPixelsMeanBatch,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return domain_err!("charbonnier epsilon must be positive, got {}", self.epsilon);
        }
        Ok(())
    }

    /// Factor applied to the raw penalty sum of a batch.
    pub fn normalizer(&self, batch: usize, elems_per_sample: usize) -> f64 {
        match self.reduction {
            Reduction::SumPixelsMeanBatch => 1.0 / batch as f64,
            Reduction::MeanAll => 1.0 / (batch * elems_per_sample) as f64,
        }
    }
}

/// `sqrt(x² + ε²)`.
pub fn charbonnier_penalty(x: f64, eps: f64) -> f64 {
    (x * x + eps * eps).sqrt()
}

/// `x / sqrt(x² + ε²)`.
pub fn charbonnier_slope(x: f64, eps: f64) -> f64 {
    x / (x * x + eps * eps).sqrt()
}

fn check_batch(pred: &[Image], target: &[Image]) -> Result<usize> {
    if pred.is_empty() || pred.len() != target.len() {
        return domain_err!("batch sizes differ or are empty: {} vs {}", pred.len(), target.len());
    }
    let shape = pred[0].tensor().shape();
    for (p, t) in pred.iter().zip(target) {
        if p.tensor().shape() != shape || t.tensor().shape() != shape {
            return domain_err!(
                "charbonnier shapes differ: {:?} vs {:?}",
                p.tensor().shape(),
                t.tensor().shape()
            );
        }
    }
    Ok(pred[0].tensor().len())
}

/// Charbonnier loss of a batch under `cfg`.
pub fn charbonnier_loss(pred: &[Image], target: &[Image], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let elems = check_batch(pred, target)?;
    let eps = cfg.epsilon as f64;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .flat_map(|(p, t)| p.tensor().data().iter().zip(t.tensor().data()))
        .map(|(&a, &b)| charbonnier_penalty(a as f64 - b as f64, eps))
        .sum();
    Ok(sum * cfg.normalizer(pred.len(), elems))
}

/// Gradient of [`charbonnier_loss`] with respect to each prediction.
pub fn charbonnier_grad(pred: &[Image], target: &[Image], cfg: &LossConfig) -> Result<Vec<Tensor>> {
    cfg.validate()?;
    let elems = check_batch(pred, target)?;
    let eps = cfg.epsilon as f64;
    let norm = cfg.normalizer(pred.len(), elems);
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            let data = p
                .tensor()
                .data()
                .iter()
                .zip(t.tensor().data())
                .map(|(&a, &b)| (norm * charbonnier_slope(a as f64 - b as f64, eps)) as f32)
                .collect();
            Tensor::new(p.tensor().shape().to_vec(), data)
        })
        .collect()
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.tensor().shape() != b.tensor().shape() {
        return domain_err!("metric inputs differ: {:?} vs {:?}", a.tensor().shape(), b.tensor().shape());
    }
    Ok(())
}

/// Mean squared error in `f64`.
pub fn mse(pred: &Image, target: &Image) -> Result<f64> {
    check_pair(pred, target)?;
    let (a, b) = (pred.tensor().data(), target.tensor().data());
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB over all channels. Identical images give `+∞`.
pub fn psnr(pred: &Image, target: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return domain_err!("psnr peak must be positive, got {}", peak);
    }
    let e = mse(pred, target)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// PSNR clamped to [`PSNR_CAP_DB`] for tables and plots.
pub fn psnr_capped(pred: &Image, target: &Image, peak: f64) -> Result<f64> {
    Ok(psnr(pred, target, peak)?.min(PSNR_CAP_DB))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean SSIM and its three factors, averaged over windows and channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimComponents {
    pub ssim: f64,
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" Gaussian filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// SSIM with an 11×11 Gaussian window (σ = 1.5), `K1 = 0.01`, `K2 = 0.03`,
/// dynamic range 1, evaluated on valid windows and averaged over channels.
pub fn ssim_components(pred: &Image, target: &Image) -> Result<SsimComponents> {
    check_pair(pred, target)?;
    let (c, h, w) = pred.tensor().chw();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return domain_err!("ssim needs at least {0}x{0} pixels, got {1}x{2}", SSIM_WINDOW, h, w);
    }
    let k = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let c3 = c2 / 2.0;
    let mut acc = [0.0f64; 4];
    let mut count = 0usize;
    for ch in 0..c {
        let x: Vec<f64> = pred.tensor().channel(ch).iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = target.tensor().channel(ch).iter().map(|&v| v as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, h, w, &k);
        let my = filter_valid(&y, h, w, &k);
        let sxx = filter_valid(&xx, h, w, &k);
        let syy = filter_valid(&yy, h, w, &k);
        let sxy = filter_valid(&xy, h, w, &k);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = (sxx[i] - ux * ux).max(0.0);
            let vy = (syy[i] - uy * uy).max(0.0);
            let cov = sxy[i] - ux * uy;
            let l = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
            let cs = (2.0 * vx.sqrt() * vy.sqrt() + c2) / (vx + vy + c2);
            let s = (cov + c3) / (vx.sqrt() * vy.sqrt() + c3);
            let full = l * (2.0 * cov + c2) / (vx + vy + c2);
            acc[0] += full;
            acc[1] += l;
            acc[2] += cs;
            acc[3] += s;
            count += 1;
        }
    }
    let n = count as f64;
    Ok(SsimComponents {
        ssim: acc[0] / n,
        luminance: acc[1] / n,
        contrast: acc[2] / n,
        structure: acc[3] / n,
    })
}

/// Mean structural similarity, see [`ssim_components`].
pub fn ssim(pred: &Image, target: &Image) -> Result<f64> {
    Ok(ssim_components(pred, target)?.ssim)
}
