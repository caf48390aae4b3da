//! Twin four-scale feature encoders and the SISR pre-upsampler.

use std::path::{Path, PathBuf};

use crate::error::{domain_err, Result};
use crate::graph::{Graph, Var};
use crate::imaging::{resize_bicubic, FeatureMap, Image};
use crate::params::{conv_spec, ParamBinder, ParamSpec, ParameterStore, RELU_GAIN};

/// Number of encoder scales.
pub const ENCODER_LEVELS: usize = 4;
/// Feature channels at every scale.
pub const FEATURE_CHANNELS: usize = 64;
const KERNEL: usize = 5;

/// Which of the two independently weighted encoders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderSide {
    Lr,
    Ref,
}

impl EncoderSide {
    pub fn prefix(self) -> &'static str {
        match self {
            EncoderSide::Lr => "enc_lr",
            EncoderSide::Ref => "enc_ref",
        }
    }
}

pub(crate) fn param_specs(side: EncoderSide, specs: &mut Vec<ParamSpec>) {
    let mut c_in = 3;
    for i in 0..ENCODER_LEVELS {
        conv_spec(specs, &format!("{}.conv{i}", side.prefix()), c_in, FEATURE_CHANNELS, KERNEL, RELU_GAIN);
        c_in = FEATURE_CHANNELS;
    }
}

/// Random parameters of one encoder.
pub fn init_encoder_params(side: EncoderSide, seed: u64) -> ParameterStore {
    let mut specs = Vec::new();
    param_specs(side, &mut specs);
    crate::params::materialize(&specs, seed)
}

/// Feature maps at scales `0..4`, each 64 channels at `full / 2^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    levels: Vec<FeatureMap>,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<FeatureMap>) -> Result<Self> {
        if levels.len() != ENCODER_LEVELS {
            return domain_err!("feature pyramid needs {} levels, got {}", ENCODER_LEVELS, levels.len());
        }
        for (i, l) in levels.iter().enumerate() {
            if l.scale_index() != i {
                return domain_err!("feature level {} carries scale index {}", i, l.scale_index());
            }
        }
        Ok(Self { levels })
    }

    pub fn level(&self, i: usize) -> &FeatureMap {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[FeatureMap] {
        &self.levels
    }
}

pub(crate) fn encoder_graph<'a>(
    g: &mut Graph<'a>,
    p: &mut ParamBinder<'a>,
    side: EncoderSide,
    img: Var,
) -> Result<[Var; ENCODER_LEVELS]> {
    let mut x = img;
    let mut out = [img; ENCODER_LEVELS];
    for (i, slot) in out.iter_mut().enumerate() {
        let stride = if i == 0 { 1 } else { 2 };
        x = p.conv_relu(g, &format!("{}.conv{i}", side.prefix()), x, stride)?;
        *slot = x;
    }
    Ok(out)
}

pub(crate) fn pyramid_from_graph(g: &Graph<'_>, vars: &[Var]) -> Result<FeaturePyramid> {
    let levels = vars
        .iter()
        .enumerate()
        .map(|(i, v)| FeatureMap::new(g.value(*v).clone(), i))
        .collect::<Result<Vec<_>>>()?;
    FeaturePyramid::new(levels)
}

/// Runs encoder `side` over an RGB image.
pub fn encode(img: &Image, params: &ParameterStore, side: EncoderSide) -> Result<FeaturePyramid> {
    if img.channels() != 3 {
        return domain_err!("encoder expects 3 channels, got {}", img.channels());
    }
    let mut g = Graph::new();
    let mut p = ParamBinder::frozen(params);
    let x = g.input(img.tensor().clone());
    let vars = encoder_graph(&mut g, &mut p, side, x)?;
    pyramid_from_graph(&g, &vars)
}

/// Single-image super-resolution used to bring the LR input to reference size.
pub trait SisrUpsampler {
    /// Upsamples `lr` by `factor`. `sample_id` names the input for
    /// implementations that look up precomputed results.
    fn upsample(&self, lr: &Image, factor: usize, sample_id: Option<&str>) -> Result<Image>;
}

/// Bicubic interpolation.
#[derive(Clone, Copy, Debug, Default)]
pub struct BicubicSisr;

impl SisrUpsampler for BicubicSisr {
    fn upsample(&self, lr: &Image, factor: usize, _sample_id: Option<&str>) -> Result<Image> {
        resize_bicubic(lr, factor as f64)
    }
}

/// Reads externally produced upsampled images from `<dir>/<sample_id>.png`.
#[derive(Clone, Debug)]
pub struct PrecomputedSisr {
    dir: PathBuf,
}

impl PrecomputedSisr {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl SisrUpsampler for PrecomputedSisr {
    fn upsample(&self, _lr: &Image, _factor: usize, sample_id: Option<&str>) -> Result<Image> {
        let Some(id) = sample_id else {
            return domain_err!("precomputed SISR needs a sample id");
        };
        crate::io::load_png(self.dir.join(format!("{id}.png")))
    }
}

/// Upsamples with `imp` and checks the result is exactly `factor` times larger.
pub fn sisr_upsample(lr: &Image, factor: usize, imp: &dyn SisrUpsampler, sample_id: Option<&str>) -> Result<Image> {
    if factor == 0 {
        return domain_err!("upsampling factor must be positive");
    }
    let out = imp.upsample(lr, factor, sample_id)?;
    let want = (lr.height() * factor, lr.width() * factor);
    if out.size() != want || out.channels() != lr.channels() {
        return domain_err!(
            "SISR output is {}x{}x{}, expected {}x{}x{}",
            out.channels(),
            out.height(),
            out.width(),
            lr.channels(),
            want.0,
            want.1
        );
    }
    Ok(out)
}
