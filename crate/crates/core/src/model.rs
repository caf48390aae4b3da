//! The assembled network: SISR upsampling, flow, twin encoders, warping, decoder.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::decoder::{decoder_graph, warp_graph};
use crate::encoder::{encoder_graph, sisr_upsample, BicubicSisr, EncoderSide, PrecomputedSisr, SisrUpsampler};
use crate::error::{domain_err, Result};
use crate::flow::{check_pair, flow_graph, pyramid_from_graph, FlowNetConfig, FlowPyramid, FLOW_LEVELS};
use crate::graph::{Graph, Var};
use crate::imaging::{pad_to_multiple, Image, SIZE_MULTIPLE};
use crate::params::{materialize, validate, ParamBinder, ParamSpec, ParameterStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Warps reference features at four scales.
    #[default]
    Crossnet,
    /// Warps the reference image once with the full-resolution flow, then encodes it.
    CrossnetIw,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Crossnet => "crossnet",
            Variant::CrossnetIw => "crossnet_iw",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "crossnet" => Ok(Variant::Crossnet),
            "crossnet_iw" | "crossnet-iw" => Ok(Variant::CrossnetIw),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// How the LR input is brought up to reference resolution.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SisrChoice {
    #[default]
    Bicubic,
    /// Precomputed images in `<dir>/<sample_id>.png`.
    Precomputed(PathBuf),
}

impl SisrChoice {
    pub fn upsampler(&self) -> Box<dyn SisrUpsampler> {
        match self {
            SisrChoice::Bicubic => Box::new(BicubicSisr),
            SisrChoice::Precomputed(dir) => Box::new(PrecomputedSisr::new(dir.clone())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossNetConfig {
    pub scale_factor: usize,
    pub variant: Variant,
    pub flow: FlowNetConfig,
    pub sisr: SisrChoice,
}

impl Default for CrossNetConfig {
    fn default() -> Self {
        Self {
            scale_factor: 8,
            variant: Variant::Crossnet,
            flow: FlowNetConfig::default(),
            sisr: SisrChoice::Bicubic,
        }
    }
}

impl CrossNetConfig {
    pub fn with_scale(scale_factor: usize) -> Self {
        Self {
            scale_factor,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale_factor, 4 | 8) {
            return domain_err!("scale factor must be 4 or 8, got {}", self.scale_factor);
        }
        if self.flow.base_channels == 0 {
            return domain_err!("flow base width must be positive");
        }
        Ok(())
    }

    pub(crate) fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        self.flow.param_specs(&mut specs);
        crate::encoder::param_specs(EncoderSide::Lr, &mut specs);
        crate::encoder::param_specs(EncoderSide::Ref, &mut specs);
        crate::decoder::param_specs(&mut specs);
        specs
    }

    /// Checks that `store` has exactly the arrays this configuration uses.
    pub fn check_params(&self, store: &ParameterStore) -> Result<()> {
        validate(store, &self.param_specs())
    }
}

/// Deterministic random initialisation for `cfg`.
pub fn init_params(cfg: &CrossNetConfig, seed: u64) -> ParameterStore {
    materialize(&cfg.param_specs(), seed)
}

/// Graph handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub prediction: Var,
    pub flows: [Var; FLOW_LEVELS],
}

/// Records the network for `variant` on `g`, reading parameters through `p`.
/// Both inputs must already be at reference resolution and a multiple of 32.
pub fn forward_graph<'a>(
    g: &mut Graph<'a>,
    p: &mut ParamBinder<'a>,
    cfg: &CrossNetConfig,
    variant: Variant,
    lr_up: Var,
    reference: Var,
) -> Result<ForwardVars> {
    let flows = flow_graph(g, p, &cfg.flow, lr_up, reference)?;
    let lr_feats = encoder_graph(g, p, EncoderSide::Lr, lr_up)?;
    let warped = match variant {
        Variant::Crossnet => {
            let ref_feats = encoder_graph(g, p, EncoderSide::Ref, reference)?;
            warp_graph(g, &ref_feats, &flows)?
        }
        Variant::CrossnetIw => {
            let warped_img = g.warp(reference, flows[0])?;
            encoder_graph(g, p, EncoderSide::Ref, warped_img)?
        }
    };
    let prediction = decoder_graph(g, p, &lr_feats, &warped)?;
    Ok(ForwardVars { prediction, flows })
}

fn check_ratio(lr: &Image, reference: &Image, scale: usize) -> Result<()> {
    let want = (lr.height() * scale, lr.width() * scale);
    if reference.size() != want {
        return domain_err!(
            "reference is {}x{} but {}x the LR size is {}x{}",
            reference.height(),
            reference.width(),
            scale,
            want.0,
            want.1
        );
    }
    Ok(())
}

/// Runs the network on an already upsampled LR image. Inputs are reflection
/// padded to a multiple of 32 and the prediction is cropped back; the flow
/// pyramid is reported at the padded size.
pub fn forward_upsampled(
    lr_up: &Image,
    reference: &Image,
    params: &ParameterStore,
    cfg: &CrossNetConfig,
    variant: Variant,
) -> Result<(Image, FlowPyramid)> {
    cfg.validate()?;
    cfg.check_params(params)?;
    if lr_up.size() != reference.size() {
        return domain_err!(
            "upsampled LR is {:?} but the reference is {:?}",
            lr_up.size(),
            reference.size()
        );
    }
    let (a, crop) = pad_to_multiple(lr_up, SIZE_MULTIPLE)?;
    let (b, _) = pad_to_multiple(reference, SIZE_MULTIPLE)?;
    check_pair(&a, &b)?;
    let mut g = Graph::new();
    let mut p = ParamBinder::frozen(params);
    let va = g.input(a.into_tensor());
    let vb = g.input(b.into_tensor());
    let vars = forward_graph(&mut g, &mut p, cfg, variant, va, vb)?;
    let prediction = crop.undo(&Image::new(g.value(vars.prediction).clone())?);
    Ok((prediction, pyramid_from_graph(&g, &vars.flows)?))
}

fn run(lr: &Image, reference: &Image, params: &ParameterStore, cfg: &CrossNetConfig, variant: Variant) -> Result<(Image, FlowPyramid)> {
    cfg.validate()?;
    check_ratio(lr, reference, cfg.scale_factor)?;
    let lr_up = sisr_upsample(lr, cfg.scale_factor, cfg.sisr.upsampler().as_ref(), None)?;
    forward_upsampled(&lr_up, reference, params, cfg, variant)
}

/// Super-resolves `lr` with the help of `reference`, using `cfg.variant`.
pub fn forward(lr: &Image, reference: &Image, params: &ParameterStore, cfg: &CrossNetConfig) -> Result<(Image, FlowPyramid)> {
    run(lr, reference, params, cfg, cfg.variant)
}

/// Image-warping ablation: warp the reference with the full-resolution flow, then encode.
pub fn forward_iw(lr: &Image, reference: &Image, params: &ParameterStore, cfg: &CrossNetConfig) -> Result<(Image, FlowPyramid)> {
    run(lr, reference, params, cfg, Variant::CrossnetIw)
}
