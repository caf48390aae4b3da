//! Multi-scale feature warping and the coarse-to-fine fusion decoder.
//!
//! Stage layout: deconvolve `(lr3, ref3)` to scale 2, then at scales 2 and 1
//! deconvolve `(lr_i, ref_i, previous)` one scale up. The post-fusion head
//! sees `(stage output, lr0, ref0)` at full resolution, so every encoder level
//! is consumed exactly once.

use crate::encoder::{FeaturePyramid, ENCODER_LEVELS, FEATURE_CHANNELS};
use crate::error::{domain_err, Result};
use crate::flow::FlowPyramid;
use crate::graph::{Graph, Var};
use crate::imaging::{warp, Image};
use crate::params::{conv_spec, deconv_spec, ParamBinder, ParamSpec, ParameterStore, RELU_GAIN};

const F: usize = FEATURE_CHANNELS;
const POST_KERNEL: usize = 5;

pub(crate) fn param_specs(specs: &mut Vec<ParamSpec>) {
    deconv_spec(specs, "dec.deconv2", 2 * F, F);
    deconv_spec(specs, "dec.deconv1", 3 * F, F);
    deconv_spec(specs, "dec.deconv0", 3 * F, F);
    conv_spec(specs, "dec.fuse1", 3 * F, F, POST_KERNEL, RELU_GAIN);
    conv_spec(specs, "dec.fuse2", F, F, POST_KERNEL, RELU_GAIN);
    conv_spec(specs, "dec.out", F, 3, POST_KERNEL, RELU_GAIN);
}

/// Random decoder parameters.
pub fn init_decoder_params(seed: u64) -> ParameterStore {
    let mut specs = Vec::new();
    param_specs(&mut specs);
    crate::params::materialize(&specs, seed)
}

/// Warps each of the four reference feature levels with the flow of the same scale.
pub fn warp_pyramid(ref_feats: &FeaturePyramid, flows: &FlowPyramid) -> Result<FeaturePyramid> {
    let levels = ref_feats
        .levels()
        .iter()
        .zip(flows.used_levels())
        .map(|(f, v)| {
            if f.size() != v.size() {
                return domain_err!(
                    "scale {}: features are {:?} but flow is {:?}",
                    f.scale_index(),
                    f.size(),
                    v.size()
                );
            }
            warp(f, v)
        })
        .collect::<Result<Vec<_>>>()?;
    FeaturePyramid::new(levels)
}

pub(crate) fn warp_graph(g: &mut Graph<'_>, feats: &[Var; ENCODER_LEVELS], flows: &[Var]) -> Result<[Var; ENCODER_LEVELS]> {
    let mut out = *feats;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = g.warp(feats[i], flows[i])?;
    }
    Ok(out)
}

pub(crate) fn decoder_graph<'a>(
    g: &mut Graph<'a>,
    p: &mut ParamBinder<'a>,
    lr: &[Var; ENCODER_LEVELS],
    warped: &[Var; ENCODER_LEVELS],
) -> Result<Var> {
    let x = g.concat(&[lr[3], warped[3]])?;
    let mut d = p.deconv_relu(g, "dec.deconv2", x)?;
    for scale in [2, 1] {
        let x = g.concat(&[lr[scale], warped[scale], d])?;
        d = p.deconv_relu(g, &format!("dec.deconv{}", scale - 1), x)?;
    }
    let x = g.concat(&[d, lr[0], warped[0]])?;
    let f1 = p.conv_relu(g, "dec.fuse1", x, 1)?;
    let f2 = p.conv_relu(g, "dec.fuse2", f1, 1)?;
    p.conv_relu(g, "dec.out", f2, 1)
}

/// Fuses LR and warped reference features into the RGB prediction.
pub fn decode(lr_feats: &FeaturePyramid, warped_feats: &FeaturePyramid, params: &ParameterStore) -> Result<Image> {
    let mut g = Graph::new();
    let mut p = ParamBinder::frozen(params);
    let lr = lr_feats.levels().iter().map(|f| g.input(f.tensor().clone())).collect::<Vec<_>>();
    let wr = warped_feats.levels().iter().map(|f| g.input(f.tensor().clone())).collect::<Vec<_>>();
    let lr: [Var; ENCODER_LEVELS] = lr.try_into().expect("pyramid has four levels");
    let wr: [Var; ENCODER_LEVELS] = wr.try_into().expect("pyramid has four levels");
    let out = decoder_graph(&mut g, &mut p, &lr, &wr)?;
    Image::new(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode, init_encoder_params, EncoderSide};
    use crate::imaging::{FeatureMap, FlowField};
    use crate::tensor::Tensor;

    fn feats(h: usize, w: usize, seed: usize) -> FeaturePyramid {
        FeaturePyramid::new(
            (0..4)
                .map(|i| {
                    let t = Tensor::from_chw(64, h >> i, w >> i, |c, y, x| {
                        (((c * 7 + y * 13 + x * 3 + seed) % 17) as f32) / 17.0
                    });
                    FeatureMap::new(t, i).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn zero_flows(h: usize, w: usize) -> FlowPyramid {
        FlowPyramid::new((0..6).map(|i| FlowField::zeros(h >> i, w >> i, i)).collect()).unwrap()
    }

    #[test]
    fn zero_flow_is_identity() {
        let f = feats(32, 64, 1);
        assert_eq!(warp_pyramid(&f, &zero_flows(32, 64)).unwrap(), f);
    }

    #[test]
    fn mismatched_levels_rejected() {
        assert!(warp_pyramid(&feats(32, 64, 1), &zero_flows(64, 64)).is_err());
    }

    #[test]
    fn output_shape() {
        let params = init_decoder_params(4);
        let out = decode(&feats(32, 64, 1), &feats(32, 64, 2), &params).unwrap();
        assert_eq!((out.channels(), out.height(), out.width()), (3, 32, 64));
    }

    #[test]
    fn affine_degenerate_head() {
        let mut params = init_decoder_params(4);
        params.get_mut("dec.out.weight").unwrap().data_mut().fill(0.0);
        params.get_mut("dec.out.bias").unwrap().data_mut().fill(0.5);
        let out = decode(&feats(32, 32, 1), &feats(32, 32, 2), &params).unwrap();
        assert!(out.tensor().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn warping_aligns_shifted_features() {
        let params = init_encoder_params(EncoderSide::Ref, 2);
        let (h, w) = (64usize, 128usize);
        let base = Image::from_fn(3, h, w, |c, y, x| {
            0.5 + 0.3 * ((x as f32 * 0.5).sin() + (y as f32 * 0.3 + c as f32).cos()) / 2.0
        });
        let shift = 16usize;
        // Reference content sits `shift` pixels to the right of the target's.
        let reference = base.shifted(-(shift as i64), 0);
        let ft = encode(&base, &params, EncoderSide::Ref).unwrap();
        let fr = encode(&reference, &params, EncoderSide::Ref).unwrap();
        let flows = FlowPyramid::new(
            (0..6)
                .map(|i| FlowField::constant(h >> i, w >> i, (shift >> i) as f32, 0.0, i))
                .collect(),
        )
        .unwrap();
        let warped = warp_pyramid(&fr, &flows).unwrap();
        // Receptive-field radius of level i in input pixels.
        let radius = [2usize, 4, 8, 16];
        let mut checked = 0;
        for i in 0..4 {
            let (a, b) = (ft.level(i).tensor(), warped.level(i).tensor());
            let (_, lh, lw) = a.chw();
            let lo = radius[i].div_ceil(1 << i) + 1;
            let hi = (radius[i] + shift).div_ceil(1 << i) + 1;
            for c in 0..64 {
                for y in lo..lh - lo {
                    for x in lo..lw - hi {
                        assert!((a.at(c, y, x) - b.at(c, y, x)).abs() < 1e-4, "level {i} at ({y}, {x})");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 0);
    }
}
