//! FlowNetS-style flow estimator with two extra ×2 refinement modules.
//!
//! The network sees the channel concatenation of the upsampled LR image and
//! the reference, and predicts backward flow at six scales. Level `i` has
//! resolution `full / 2^i` and stores displacements in its own pixel units.

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::graph::{Graph, Var};
use crate::imaging::{FlowField, Image, SIZE_MULTIPLE};
use crate::kernels::sample::upsample_forward;
use crate::params::{conv_spec, deconv_spec, ParamBinder, ParamSpec, ParameterStore, RELU_GAIN};
use crate::tensor::Tensor;

/// Number of flow levels produced by a forward pass.
pub const FLOW_LEVELS: usize = 6;
/// Levels `0..WARP_LEVELS` drive feature warping.
pub const WARP_LEVELS: usize = 4;

/// Initial gain of the flow prediction heads. Small so that the untrained
/// network starts close to the identity warp.
const FLOW_HEAD_GAIN: f32 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowNetVariant {
    /// Flow predicted down to 1/4 resolution, then bilinearly upsampled.
    Plain,
    /// Learned ×2 modules refine 1/4 → 1/2 → full resolution.
    #[default]
    Plus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNetConfig {
    pub variant: FlowNetVariant,
    /// Width of the first layer; every other width is a fixed multiple.
    pub base_channels: usize,
}

impl Default for FlowNetConfig {
    fn default() -> Self {
        Self {
            variant: FlowNetVariant::Plus,
            base_channels: 64,
        }
    }
}

/// One contracting layer: `(name, kernel, stride, width multiple of base)`.
pub const CONTRACTING: [(&str, usize, usize, usize); 10] = [
    ("conv1", 7, 2, 1),
    ("conv2", 5, 2, 2),
    ("conv3", 5, 2, 4),
    ("conv3_1", 3, 1, 4),
    ("conv4", 3, 2, 8),
    ("conv4_1", 3, 1, 8),
    ("conv5", 3, 2, 8),
    ("conv5_1", 3, 1, 8),
    ("conv6", 3, 2, 16),
    ("conv6_1", 3, 1, 16),
];

impl FlowNetConfig {
    pub fn output_scales(&self) -> usize {
        FLOW_LEVELS
    }

    fn widths(&self) -> Widths {
        let b = self.base_channels;
        Widths {
            c1: b,
            c2: 2 * b,
            c3: 4 * b,
            c4: 8 * b,
            c5: 8 * b,
            c6: 16 * b,
            d5: 8 * b,
            d4: 4 * b,
            d3: 2 * b,
            d2: b,
            d1: 2 * b,
            d0: b,
        }
    }

    /// Input channel count of the flow head at each predicted level.
    fn concat_widths(&self) -> [usize; FLOW_LEVELS] {
        let w = self.widths();
        let cat5 = w.c5 + w.d5;
        let cat4 = w.c4 + w.d4 + 2;
        let cat3 = w.c3 + w.d3 + 2;
        let cat2 = w.c2 + w.d2 + 2;
        let cat1 = w.c1 + w.d1 + 2;
        let cat0 = 6 + w.d0 + 2;
        [cat0, cat1, cat2, cat3, cat4, cat5]
    }

    pub(crate) fn param_specs(&self, specs: &mut Vec<ParamSpec>) {
        let mut c_in = 6;
        for (name, k, _, mult) in CONTRACTING {
            let c_out = mult * self.base_channels;
            conv_spec(specs, &format!("flow.{name}"), c_in, c_out, k, RELU_GAIN);
            c_in = c_out;
        }
        let w = self.widths();
        let cat = self.concat_widths();
        deconv_spec(specs, "flow.deconv5", w.c6, w.d5);
        deconv_spec(specs, "flow.deconv4", cat[5], w.d4);
        deconv_spec(specs, "flow.deconv3", cat[4], w.d3);
        deconv_spec(specs, "flow.deconv2", cat[3], w.d2);
        let lowest = match self.variant {
            FlowNetVariant::Plain => 2,
            FlowNetVariant::Plus => {
                deconv_spec(specs, "flow.deconv1", cat[2], w.d1);
                deconv_spec(specs, "flow.deconv0", cat[1], w.d0);
                0
            }
        };
        for level in lowest..FLOW_LEVELS {
            conv_spec(specs, &format!("flow.predict_flow{level}"), cat[level], 2, 3, FLOW_HEAD_GAIN);
        }
    }
}

struct Widths {
    c1: usize,
    c2: usize,
    c3: usize,
    c4: usize,
    c5: usize,
    c6: usize,
    d5: usize,
    d4: usize,
    d3: usize,
    d2: usize,
    d1: usize,
    d0: usize,
}

/// Flow fields for scale indices `0..6`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPyramid {
    levels: Vec<FlowField>,
}

impl FlowPyramid {
    pub fn new(levels: Vec<FlowField>) -> Result<Self> {
        if levels.len() != FLOW_LEVELS {
            return domain_err!("flow pyramid needs {} levels, got {}", FLOW_LEVELS, levels.len());
        }
        let (h, w) = levels[0].size();
        for (i, f) in levels.iter().enumerate() {
            if f.scale_index() != i || f.size() != (h.div_ceil(1 << i), w.div_ceil(1 << i)) {
                return domain_err!("flow level {} has size {:?} at scale {}", i, f.size(), f.scale_index());
            }
        }
        Ok(Self { levels })
    }

    pub fn level(&self, i: usize) -> &FlowField {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[FlowField] {
        &self.levels
    }

    /// The levels consumed by feature warping.
    pub fn used_levels(&self) -> &[FlowField] {
        &self.levels[..WARP_LEVELS]
    }
}

pub(crate) fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.channels() != 3 || b.channels() != 3 {
        return domain_err!("flow inputs must be RGB, got {} and {} channels", a.channels(), b.channels());
    }
    if a.size() != b.size() {
        return domain_err!("flow inputs differ in size: {:?} vs {:?}", a.size(), b.size());
    }
    let (h, w) = a.size();
    if h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 {
        return domain_err!("flow input size {}x{} is not a multiple of {}", h, w, SIZE_MULTIPLE);
    }
    Ok(())
}

/// Records the flow network on `g`; returns the flow variables of levels 0..6.
pub(crate) fn flow_graph<'a>(
    g: &mut Graph<'a>,
    p: &mut ParamBinder<'a>,
    cfg: &FlowNetConfig,
    lr_up: Var,
    reference: Var,
) -> Result<[Var; FLOW_LEVELS]> {
    let input = g.concat(&[lr_up, reference])?;
    let mut x = input;
    let mut acts = Vec::with_capacity(CONTRACTING.len());
    for (name, _, stride, _) in CONTRACTING {
        x = p.conv_relu(g, &format!("flow.{name}"), x, stride)?;
        acts.push(x);
    }
    let [conv1, conv2, _, conv3_1, _, conv4_1, _, conv5_1, _, conv6_1] = acts[..] else {
        unreachable!()
    };

    let up5 = deconv_to(g, p, "flow.deconv5", conv6_1, conv5_1)?;
    let cat5 = g.concat(&[conv5_1, up5])?;
    let flow5 = p.conv(g, "flow.predict_flow5", cat5, 1)?;

    let (cat4, flow4) = refine(g, p, 4, cat5, flow5, conv4_1)?;
    let (cat3, flow3) = refine(g, p, 3, cat4, flow4, conv3_1)?;
    let (cat2, flow2) = refine(g, p, 2, cat3, flow3, conv2)?;
    let (flow1, flow0) = match cfg.variant {
        FlowNetVariant::Plus => {
            let (cat1, flow1) = refine(g, p, 1, cat2, flow2, conv1)?;
            let (_, flow0) = refine(g, p, 0, cat1, flow1, input)?;
            (flow1, flow0)
        }
        FlowNetVariant::Plain => {
            let (h, w) = spatial(g, input);
            let f1 = g.upsample(flow2, 2, 2.0)?;
            let f1 = g.crop(f1, h.div_ceil(2), w.div_ceil(2))?;
            let f0 = g.upsample(flow2, 4, 4.0)?;
            let f0 = g.crop(f0, h, w)?;
            (f1, f0)
        }
    };
    Ok([flow0, flow1, flow2, flow3, flow4, flow5])
}

fn spatial(g: &Graph<'_>, v: Var) -> (usize, usize) {
    let (_, h, w) = g.value(v).chw();
    (h, w)
}

fn deconv_to<'a>(g: &mut Graph<'a>, p: &mut ParamBinder<'a>, name: &str, x: Var, like: Var) -> Result<Var> {
    let (h, w) = spatial(g, like);
    let y = p.deconv_relu(g, name, x)?;
    g.crop(y, h, w)
}

/// One ×2 refinement: deconvolve coarser features, upsample the coarser flow,
/// concatenate with the skip and predict the flow at `level`.
fn refine<'a>(
    g: &mut Graph<'a>,
    p: &mut ParamBinder<'a>,
    level: usize,
    coarse_feats: Var,
    coarse_flow: Var,
    skip: Var,
) -> Result<(Var, Var)> {
    let (h, w) = spatial(g, skip);
    let feats = deconv_to(g, p, &format!("flow.deconv{level}"), coarse_feats, skip)?;
    let flow_up = g.upsample(coarse_flow, 2, 2.0)?;
    let flow_up = g.crop(flow_up, h, w)?;
    let cat = g.concat(&[skip, feats, flow_up])?;
    let flow = p.conv(g, &format!("flow.predict_flow{level}"), cat, 1)?;
    Ok((cat, flow))
}

pub(crate) fn pyramid_from_graph(g: &Graph<'_>, flows: &[Var; FLOW_LEVELS]) -> Result<FlowPyramid> {
    let levels = flows
        .iter()
        .enumerate()
        .map(|(i, v)| FlowField::new(g.value(*v).clone(), i))
        .collect::<Result<Vec<_>>>()?;
    FlowPyramid::new(levels)
}

/// Flow estimator parameters for `cfg` drawn from `seed`.
pub fn init_flow_params(cfg: &FlowNetConfig, seed: u64) -> ParameterStore {
    let mut specs = Vec::new();
    cfg.param_specs(&mut specs);
    crate::params::materialize(&specs, seed)
}

/// Predicts the flow pyramid aligning `reference` to `lr_up`.
pub fn estimate_flow(lr_up: &Image, reference: &Image, params: &ParameterStore, cfg: &FlowNetConfig) -> Result<FlowPyramid> {
    check_pair(lr_up, reference)?;
    let mut g = Graph::new();
    let mut p = ParamBinder::frozen(params);
    let a = g.input(lr_up.tensor().clone());
    let b = g.input(reference.tensor().clone());
    let flows = flow_graph(&mut g, &mut p, cfg, a, b)?;
    pyramid_from_graph(&g, &flows)
}

/// Doubles the resolution of a flow level and converts it to finer pixel units.
pub fn upsample_flow(flow: &FlowField) -> Result<FlowField> {
    if flow.scale_index() == 0 {
        return domain_err!("flow is already at full resolution");
    }
    let (h, w) = flow.size();
    let data = upsample_forward(flow.tensor().data(), (2, h, w), 2, 2.0);
    FlowField::new(Tensor::new(vec![2, 2 * h, 2 * w], data)?, flow.scale_index() - 1)
}

/// Colour-codes a flow field: hue follows direction, saturation grows with
/// magnitude and saturates at `max_magnitude`. Zero flow is white.
pub fn flow_to_color(flow: &FlowField, max_magnitude: f32) -> Result<Image> {
    if !(max_magnitude > 0.0 && max_magnitude.is_finite()) {
        return domain_err!("max_magnitude must be positive, got {}", max_magnitude);
    }
    let (h, w) = flow.size();
    let mut out = Tensor::zeros(&[3, h, w]);
    let plane = h * w;
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(y, x);
            let (r, g, b) = direction_color(u, v, max_magnitude);
            let i = y * w + x;
            let d = out.data_mut();
            d[i] = r;
            d[plane + i] = g;
            d[2 * plane + i] = b;
        }
    }
    Image::new(out)
}

/// Hue in degrees of a flow vector, `0` along `+x`, increasing towards `+y`.
pub fn flow_hue(u: f32, v: f32) -> f32 {
    let deg = v.atan2(u).to_degrees();
    if deg < 0.0 {
        deg + 360.0
    } else {
        deg
    }
}

fn direction_color(u: f32, v: f32, max_magnitude: f32) -> (f32, f32, f32) {
    let mag = (u * u + v * v).sqrt();
    let s = (mag / max_magnitude).min(1.0);
    if s == 0.0 {
        return (1.0, 1.0, 1.0);
    }
    hsv_to_rgb(flow_hue(u, v), s, 1.0)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = (h / 60.0).rem_euclid(6.0);
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}
