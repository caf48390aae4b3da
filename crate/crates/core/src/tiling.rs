//! Sliding-window inference for images larger than the training window.

use serde::{Deserialize, Serialize};

use crate::encoder::sisr_upsample;
use crate::error::{domain_err, Result};
use crate::imaging::Image;
use crate::model::{forward_upsampled, CrossNetConfig};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blend {
    /// Uniform weights inside every tile.
    #[default]
    Average,
    /// Weights fall off linearly towards the tile edges.
    Feather,
}

impl std::str::FromStr for Blend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "average" => Ok(Blend::Average),
            "feather" => Ok(Blend::Feather),
            other => Err(format!("unknown blend `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub window: usize,
    pub stride: usize,
    pub blend: Blend,
    /// Extra pixels of surrounding image fed to the network on every side of
    /// a window and discarded afterwards. Context windows start on multiples
    /// of [`CONTEXT_ALIGN`].
    #[serde(default = "default_context")]
    pub context: usize,
}

/// Alignment of context windows, matching the coarsest pyramid grid.
pub const CONTEXT_ALIGN: usize = 32;

fn default_context() -> usize {
    32
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            window: 512,
            stride: 256,
            blend: Blend::Average,
            context: default_context(),
        }
    }
}

impl TileSpec {
    pub fn validate(&self, scale: usize) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return domain_err!("need 0 < stride <= window, got window {} stride {}", self.window, self.stride);
        }
        if self.window % scale != 0 || self.stride % scale != 0 {
            return domain_err!("window {} and stride {} must be multiples of the scale {}", self.window, self.stride, scale);
        }
        Ok(())
    }
}

/// Tile origins along one axis of length `len`; the last window ends flush
/// with the border. Returns the window extent used on this axis.
pub fn tile_origins(len: usize, window: usize, stride: usize) -> (Vec<usize>, usize) {
    if len <= window {
        return (vec![0], len);
    }
    let mut out = Vec::new();
    let mut o = 0;
    while o + window < len {
        out.push(o);
        o += stride;
    }
    out.push(len - window);
    out.dedup();
    (out, window)
}

/// One tile on the reference-resolution canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub y: usize,
    pub x: usize,
    pub height: usize,
    pub width: usize,
}

pub fn tiles(h: usize, w: usize, spec: &TileSpec) -> Vec<Tile> {
    let (ys, th) = tile_origins(h, spec.window, spec.stride);
    let (xs, tw) = tile_origins(w, spec.window, spec.stride);
    ys.iter()
        .flat_map(|&y| {
            xs.iter().map(move |&x| Tile {
                y,
                x,
                height: th,
                width: tw,
            })
        })
        .collect()
}

fn raw_weight(blend: Blend, t: &Tile, y: usize, x: usize) -> f64 {
    match blend {
        Blend::Average => 1.0,
        Blend::Feather => {
            let dy = (y + 1).min(t.height - y) as f64;
            let dx = (x + 1).min(t.width - x) as f64;
            dy * dx
        }
    }
}

/// Per-tile blend weights, normalised so they sum to one at every canvas
/// pixel. The last tile covering a pixel takes the remainder, which makes the
/// sum exact in floating point.
pub fn blend_weights(h: usize, w: usize, tiles: &[Tile], blend: Blend) -> Vec<Vec<f64>> {
    let mut total = vec![0.0f64; h * w];
    let mut last = vec![usize::MAX; h * w];
    for (i, t) in tiles.iter().enumerate() {
        for y in 0..t.height {
            for x in 0..t.width {
                let k = (t.y + y) * w + t.x + x;
                total[k] += raw_weight(blend, t, y, x);
                last[k] = i;
            }
        }
    }
    let mut running = vec![0.0f64; h * w];
    tiles
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut out = vec![0.0; t.height * t.width];
            for y in 0..t.height {
                for x in 0..t.width {
                    let k = (t.y + y) * w + t.x + x;
                    let wt = if last[k] == i {
                        1.0 - running[k]
                    } else {
                        raw_weight(blend, t, y, x) / total[k]
                    };
                    running[k] += wt;
                    out[y * t.width + x] = wt;
                }
            }
            out
        })
        .collect()
}

/// Span `[start, end)` of the network input around a window at `origin`.
pub fn context_span(origin: usize, extent: usize, len: usize, context: usize) -> (usize, usize) {
    let start = origin.saturating_sub(context) / CONTEXT_ALIGN * CONTEXT_ALIGN;
    let end = ((origin + extent + context).div_ceil(CONTEXT_ALIGN) * CONTEXT_ALIGN).min(len);
    (start, end)
}

/// Sum of the blend weights at every canvas pixel.
pub fn weight_canvas(h: usize, w: usize, spec: &TileSpec) -> Vec<f64> {
    let ts = tiles(h, w, spec);
    let mut canvas = vec![0.0f64; h * w];
    for (t, wts) in ts.iter().zip(blend_weights(h, w, &ts, spec.blend)) {
        for y in 0..t.height {
            for x in 0..t.width {
                canvas[(t.y + y) * w + t.x + x] += wts[y * t.width + x];
            }
        }
    }
    canvas
}

/// Super-resolves `lr` tile by tile. The LR image is upsampled once; each
/// tile runs the network on the matching crops of the upsampled LR and the
/// reference, widened by the context margin, and the window part of the
/// overlapping predictions is blended.
pub fn sliding_window_sr(lr: &Image, reference: &Image, params: &ParameterStore, cfg: &CrossNetConfig, spec: &TileSpec) -> Result<Image> {
    cfg.validate()?;
    spec.validate(cfg.scale_factor)?;
    let s = cfg.scale_factor;
    let (h, w) = reference.size();
    if (lr.height() * s, lr.width() * s) != (h, w) {
        return domain_err!("reference {}x{} is not {}x the LR size {}x{}", h, w, s, lr.height(), lr.width());
    }
    let lr_up = sisr_upsample(lr, s, cfg.sisr.upsampler().as_ref(), None)?;
    sliding_window_upsampled(&lr_up, reference, params, cfg, spec)
}

/// [`sliding_window_sr`] on an LR image already upsampled to reference size.
pub fn sliding_window_upsampled(
    lr_up: &Image,
    reference: &Image,
    params: &ParameterStore,
    cfg: &CrossNetConfig,
    spec: &TileSpec,
) -> Result<Image> {
    spec.validate(cfg.scale_factor)?;
    let (h, w) = reference.size();
    if lr_up.size() != (h, w) {
        return domain_err!("upsampled LR {:?} and reference {:?} differ", lr_up.size(), reference.size());
    }
    let ts = tiles(h, w, spec);
    if ts.len() == 1 {
        return Ok(forward_upsampled(lr_up, reference, params, cfg, cfg.variant)?.0);
    }
    let weights = blend_weights(h, w, &ts, spec.blend);
    let mut acc = vec![0.0f64; 3 * h * w];
    for (t, wts) in ts.iter().zip(&weights) {
        let (y0, y1) = context_span(t.y, t.height, h, spec.context);
        let (x0, x1) = context_span(t.x, t.width, w, spec.context);
        let a = lr_up.crop(y0, x0, y1 - y0, x1 - x0);
        let b = reference.crop(y0, x0, y1 - y0, x1 - x0);
        let (pred, _) = forward_upsampled(&a, &b, params, cfg, cfg.variant)?;
        let (oy, ox) = (t.y - y0, t.x - x0);
        for c in 0..3 {
            for y in 0..t.height {
                for x in 0..t.width {
                    acc[(c * h + t.y + y) * w + t.x + x] += wts[y * t.width + x] * pred.at(c, oy + y, ox + x) as f64;
                }
            }
        }
    }
    Image::new(Tensor::new(vec![3, h, w], acc.into_iter().map(|v| v as f32).collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origins() {
        assert_eq!(tile_origins(512, 512, 256), (vec![0], 512));
        assert_eq!(tile_origins(768, 512, 256), (vec![0, 256], 512));
        assert_eq!(tile_origins(600, 512, 256), (vec![0, 88], 512));
        assert_eq!(tile_origins(1100, 512, 256), (vec![0, 256, 512, 588], 512));
        assert_eq!(tile_origins(100, 512, 256), (vec![0], 100));
    }

    #[test]
    fn overlap_band_is_halved() {
        let spec = TileSpec::default();
        let ts = tiles(512, 768, &spec);
        let wts = blend_weights(512, 768, &ts, Blend::Average);
        assert_eq!(ts.len(), 2);
        assert_eq!(wts[0][300], 0.5);
        assert_eq!(wts[0][100], 1.0);
        assert_eq!(wts[1][100], 0.5);
        assert_eq!(wts[1][300], 1.0);
    }

    #[test]
    fn weights_sum_to_one() {
        for blend in [Blend::Average, Blend::Feather] {
            for (h, w) in [(512, 768), (600, 1100), (1100, 1100), (64, 1000)] {
                for stride in [128, 256, 200] {
                    let spec = TileSpec { window: 512, stride, blend, context: 32 };
                    assert!(weight_canvas(h, w, &spec).iter().all(|&v| v == 1.0), "{blend:?} {h}x{w} stride {stride}");
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        let spec = TileSpec { window: 256, stride: 300, ..TileSpec::default() };
        assert!(spec.validate(8).is_err());
        assert!(TileSpec { window: 100, stride: 50, ..TileSpec::default() }.validate(8).is_err());
        TileSpec::default().validate(8).unwrap();
    }
}
