use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crossnet::decoder::{decode, init_decoder_params, warp_pyramid};
use crossnet::encoder::{encode, init_encoder_params, EncoderSide, FeaturePyramid};
use crossnet::flow::{flow_to_color, upsample_flow, FlowNetConfig, FlowNetVariant, FlowPyramid, FLOW_LEVELS};
use crossnet::imaging::{bilinear_sample, pad_to_multiple};
use crossnet::lightfield::{draw_parallax_offset, make_lr, sample_positions, MAX_PARALLAX_OFFSET};
use crossnet::objectives::{charbonnier_slope, mse, ssim_components};
use crossnet::optim::{adam_step, AdamConfig, AdamState};
use crossnet::synthetic::generate_scene;
use crossnet::tiling::{sliding_window_sr, Blend, TileSpec};
use crossnet::{forward, init_params, CrossNetConfig, FeatureMap, FlowField, Graph, Image, ParameterStore, Tensor};

use crate::reference::{self as oracle, Planes};
use crate::smoke::{self, mean};
use crate::{run_cases, Filter, Measurement, OracleCase, Subject};

type Out = Result<Measurement, String>;

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn registry() -> Vec<OracleCase> {
    vec![
        OracleCase {
            name: "bilinear_hand_evaluated",
            module: "imaging_core",
            tags: &["warp"],
            tolerance: 0.0,
            run: bilinear_hand_evaluated,
        },
        OracleCase {
            name: "warp_unit_shift_ramp",
            module: "imaging_core",
            tags: &["warp"],
            tolerance: 0.0,
            run: warp_unit_shift_ramp,
        },
        OracleCase {
            name: "warp_flow_gradient_fd",
            module: "imaging_core",
            tags: &["warp", "grad"],
            tolerance: 1e-3,
            run: warp_flow_gradient_fd,
        },
        OracleCase {
            name: "pad_to_multiple_of_32",
            module: "imaging_core",
            tags: &["shape"],
            tolerance: 0.0,
            run: pad_to_multiple_of_32,
        },
        OracleCase {
            name: "flow_upsample_compose",
            module: "flow_estimator",
            tags: &["flow"],
            tolerance: 1e-5,
            run: flow_upsample_compose,
        },
        OracleCase {
            name: "flow_color_opposite_hue",
            module: "flow_estimator",
            tags: &["flow", "viz"],
            tolerance: 0.05,
            run: flow_color_opposite_hue,
        },
        OracleCase {
            name: "encoder_shift_alignment",
            module: "encoders",
            tags: &["encoder"],
            tolerance: 1e-5,
            run: encoder_shift_alignment,
        },
        OracleCase {
            name: "decoder_receptive_field",
            module: "fusion_decoder",
            tags: &["decoder"],
            tolerance: 0.0,
            run: decoder_receptive_field,
        },
        OracleCase {
            name: "zero_parallax_beats_bicubic_3db",
            module: "crossnet_model",
            tags: &["slow", "smoke"],
            tolerance: 0.0,
            run: zero_parallax_beats_bicubic_3db,
        },
        OracleCase {
            name: "charbonnier_slope_hand",
            module: "objectives_metrics",
            tags: &["loss"],
            tolerance: 1e-12,
            run: charbonnier_slope_hand,
        },
        OracleCase {
            name: "mse_bruteforce",
            module: "objectives_metrics",
            tags: &["metric"],
            tolerance: 1e-9,
            run: mse_bruteforce,
        },
        OracleCase {
            name: "ssim_negative_checkerboard",
            module: "objectives_metrics",
            tags: &["metric"],
            tolerance: 1e-9,
            run: ssim_negative_checkerboard,
        },
        OracleCase {
            name: "ssim_bias_split",
            module: "objectives_metrics",
            tags: &["metric"],
            tolerance: 1e-9,
            run: ssim_bias_split,
        },
        OracleCase {
            name: "lr_antialias_fft",
            module: "lightfield_data",
            tags: &["data"],
            tolerance: 0.1,
            run: lr_antialias_fft,
        },
        OracleCase {
            name: "angular_cell_uniformity",
            module: "lightfield_data",
            tags: &["data", "stats"],
            tolerance: 3.0,
            run: angular_cell_uniformity,
        },
        OracleCase {
            name: "parallax_offset_uniformity",
            module: "lightfield_data",
            tags: &["data", "stats"],
            tolerance: 3.0,
            run: parallax_offset_uniformity,
        },
        OracleCase {
            name: "smoke_loss_trend",
            module: "training_harness",
            tags: &["slow", "smoke"],
            tolerance: 0.0,
            run: smoke_loss_trend,
        },
        OracleCase {
            name: "adam_sign_fixed_point",
            module: "training_harness",
            tags: &["optim"],
            tolerance: 1e-4,
            run: adam_sign_fixed_point,
        },
        OracleCase {
            name: "eval_zero_parallax_beats_bicubic",
            module: "training_harness",
            tags: &["slow", "smoke"],
            tolerance: 0.0,
            run: eval_zero_parallax_beats_bicubic,
        },
        OracleCase {
            name: "tiled_constant_equals_direct",
            module: "cli_tooling",
            tags: &["tiling"],
            tolerance: 1e-5,
            run: tiled_constant_equals_direct,
        },
        OracleCase {
            name: "flow_viz_dominant_hue",
            module: "cli_tooling",
            tags: &["slow", "smoke", "viz"],
            tolerance: 30.0,
            run: flow_viz_dominant_hue,
        },
        OracleCase {
            name: "suite_wall_clock",
            module: "property_suite",
            tags: &["budget", "slow"],
            tolerance: 900.0,
            run: suite_wall_clock,
        },
    ]
}

fn bilinear_hand_evaluated(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let src = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 5.0]).map_err(s)?;
    let coords = Tensor::new(vec![2, 1, 1], vec![0.5, 0.5]).map_err(s)?;
    let got = bilinear_sample(&src, &coords).map_err(s)?.data()[0] as f64;
    let want = (1.0 + 2.0 + 3.0 + 5.0) / 4.0;
    Ok(Measurement::new((got - want).abs(), format!("got {got}, want {want}")))
}

fn warp_unit_shift_ramp(subject: &Subject, _: &mut ChaCha8Rng) -> Out {
    let (h, w) = (9, 13);
    let src = Tensor::from_chw(1, h, w, |_, _, x| x as f32);
    let flow = FlowField::constant(h, w, 1.0, 0.0, 0);
    let out = (subject.warp)(&src, &flow).map_err(s)?;
    let mut err = 0.0f64;
    for y in 0..h {
        for x in 0..w - 1 {
            err = err.max((out.at(0, y, x) as f64 - (x + 1) as f64).abs());
        }
    }
    Ok(Measurement::new(err, "interior columns hold x + 1"))
}

fn smooth_planes(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Planes {
    let ph: Vec<(f64, f64, f64)> = (0..c)
        .map(|_| (rng.random_range(0.2..0.6), rng.random_range(0.2..0.6), rng.random_range(0.0..6.0)))
        .collect();
    Planes::from_fn(c, h, w, |ci, y, x| {
        let (a, b, p) = ph[ci];
        0.5 + 0.3 * (a * x as f64 + p).sin() * (b * y as f64 + 0.5 * p).cos()
    })
}

fn near_lattice(v: f64, margin: f64) -> bool {
    let f = v - v.floor();
    f < margin || f > 1.0 - margin
}

fn warp_flow_gradient_fd(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let (c, h, w) = (2, 12, 14);
    let eps = 1e-3;
    let step = 1e-3;
    let src = smooth_planes(c, h, w, rng);
    let flow = Planes::from_fn(2, h, w, |_, _, _| rng.random_range(-1.4..1.4));
    let flow_t = Tensor::new(vec![2, h, w], flow.to_f32()).map_err(s)?;
    let flow = Planes::from_f32(2, h, w, flow_t.data());
    let warped = oracle::warp(&src, &flow);
    let target = Planes {
        data: warped
            .data
            .iter()
            .map(|v| v + if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.1..0.3))
            .collect(),
        ..warped.clone()
    };
    let target_t = Tensor::new(vec![c, h, w], target.to_f32()).map_err(s)?;
    let target = Planes::from_f32(c, h, w, target_t.data());
    let src_t = Tensor::new(vec![c, h, w], src.to_f32()).map_err(s)?;
    let src = Planes::from_f32(c, h, w, src_t.data());

    let mut g = Graph::new();
    let sv = g.input(src_t.clone());
    let fv = g.param(&flow_t);
    let tv = g.input(target_t.clone());
    let out = g.warp(sv, fv).map_err(s)?;
    let loss = g.charbonnier_sum(out, tv, eps as f32).map_err(s)?;
    let grads = g.backward(loss).map_err(s)?;
    let analytic = grads.get(fv).ok_or("no flow gradient")?;

    let mut worst = 0.0f64;
    let mut probes = 0;
    while probes < 30 {
        let (k, y, x) = (rng.random_range(0..2), rng.random_range(2..h - 2), rng.random_range(2..w - 2));
        let pos = if k == 0 { x as f64 } else { y as f64 } + flow.at(k, y, x);
        let limit = if k == 0 { w } else { h } as f64 - 1.0;
        if near_lattice(pos, 2.0 * step) || pos < step || pos > limit - step {
            continue;
        }
        let mut plus = flow.clone();
        plus.set(k, y, x, flow.at(k, y, x) + step);
        let mut minus = flow.clone();
        minus.set(k, y, x, flow.at(k, y, x) - step);
        let num = (oracle::charbonnier_total(&oracle::warp(&src, &plus), &target, eps)
            - oracle::charbonnier_total(&oracle::warp(&src, &minus), &target, eps))
            / (2.0 * step);
        let ana = analytic.at(k, y, x) as f64;
        worst = worst.max((ana - num).abs() / num.abs().max(1e-3));
        probes += 1;
    }
    Ok(Measurement::new(worst, format!("{probes} probes, max relative error")))
}

fn pad_to_multiple_of_32(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let img = Image::constant(3, 376, 541, 0.5);
    let (padded, _) = pad_to_multiple(&img, 32).map_err(s)?;
    let ceil32 = |n: usize| ((n + 31) / 32) * 32;
    let (h, w) = padded.size();
    let err = (h as f64 - ceil32(376) as f64).abs() + (w as f64 - ceil32(541) as f64).abs();
    Ok(Measurement::new(err, format!("376x541 -> {h}x{w}")))
}

fn flow_upsample_compose(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let (h, w) = (10, 12);
    let a: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
    let coarse = Planes::from_fn(2, h, w, |c, y, x| {
        let (x, y) = (x as f64, y as f64);
        if c == 0 {
            a[0] * x + a[1] * y + a[2]
        } else {
            a[3] * x + a[4] * y + a[5]
        }
    });
    let field = FlowField::new(Tensor::new(vec![2, h, w], coarse.to_f32()).map_err(s)?, 2).map_err(s)?;
    let twice = upsample_flow(&upsample_flow(&field).map_err(s)?).map_err(s)?;
    let coarse = Planes::from_f32(2, h, w, field.tensor().data());
    let direct = oracle::upsample(&coarse, 4, 4.0);
    let m = 8;
    let mut err = 0.0f64;
    for c in 0..2 {
        for y in m..4 * h - m {
            for x in m..4 * w - m {
                err = err.max((twice.tensor().at(c, y, x) as f64 - direct.at(c, y, x)).abs());
            }
        }
    }
    Ok(Measurement::new(err, format!("scale index {}", twice.scale_index())))
}

fn flow_color_opposite_hue(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let max = 4.0f32;
    let mut worst = 0.0f64;
    for _ in 0..64 {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let m = rng.random_range(0.5..4.0);
        let hue = |t: f64| -> Result<f64, String> {
            let f = FlowField::constant(1, 1, (m * t.cos()) as f32, (m * t.sin()) as f32, 0);
            let img = flow_to_color(&f, max).map_err(s)?;
            oracle::rgb_hue(img.at(0, 0, 0) as f64, img.at(1, 0, 0) as f64, img.at(2, 0, 0) as f64)
                .ok_or_else(|| "achromatic pixel".to_string())
        };
        let d = oracle::hue_distance(hue(theta)?, hue(theta + std::f64::consts::PI)?);
        worst = worst.max((d - 180.0).abs());
    }
    Ok(Measurement::new(worst, "degrees from complementary, 64 directions"))
}

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(3, h, w, |_, _, _| rng.random_range(0.0..1.0))
}

fn encoder_shift_alignment(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    const SHIFT: usize = 8;
    let (h, w) = (64, 96);
    let params = init_encoder_params(EncoderSide::Ref, rng.random());
    let lr = random_image(h, w, rng);
    let reference = lr.shifted(-(SHIFT as i64), 0);
    let lr_feats = encode(&lr, &params, EncoderSide::Ref).map_err(s)?;
    let ref_feats = encode(&reference, &params, EncoderSide::Ref).map_err(s)?;
    let flows = FlowPyramid::new(
        (0..FLOW_LEVELS)
            .map(|i| FlowField::constant(h.div_ceil(1 << i), w.div_ceil(1 << i), (SHIFT >> i.min(3)) as f32, 0.0, i))
            .collect(),
    )
    .map_err(s)?;
    let warped = warp_pyramid(&ref_feats, &flows).map_err(s)?;
    // Receptive-field radius of level i in input pixels: 2, 4, 8, 16.
    let mut err = 0.0f64;
    for i in 0..4 {
        let radius = 2usize << i;
        let margin = (radius + SHIFT + 2).div_ceil(1 << i) + 1;
        let (a, b) = (lr_feats.level(i).tensor(), warped.level(i).tensor());
        let (c, lh, lw) = a.chw();
        for ci in 0..c {
            for y in 0..lh {
                for x in margin..lw - margin {
                    err = err.max((a.at(ci, y, x) as f64 - b.at(ci, y, x) as f64).abs());
                }
            }
        }
    }
    Ok(Measurement::new(err, format!("reference shifted {SHIFT} px, flow {SHIFT}/2^i per level")))
}

fn random_pyramid(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<FeaturePyramid, String> {
    let levels = (0..4)
        .map(|i| {
            let t = Tensor::from_fn(&[c, h >> i, w >> i], |_| rng.random_range(0.0..1.0));
            FeatureMap::new(t, i)
        })
        .collect::<crossnet::Result<Vec<_>>>()
        .map_err(s)?;
    FeaturePyramid::new(levels).map_err(s)
}

fn decoder_receptive_field(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let (h, w) = (32, 32);
    let params = init_decoder_params(rng.random());
    let lr = random_pyramid(64, h, w, rng)?;
    let warped = random_pyramid(64, h, w, rng)?;
    let base = decode(&lr, &warped, &params).map_err(s)?;
    let (py, px) = (16usize, 15usize);
    let mut levels = warped.levels().to_vec();
    let mut t = levels[0].tensor().clone();
    for c in 0..64 {
        t.data_mut()[(c * h + py) * w + px] += 1.0;
    }
    levels[0] = FeatureMap::new(t, 0).map_err(s)?;
    let poked = decode(&lr, &FeaturePyramid::new(levels).map_err(s)?, &params).map_err(s)?;
    // Three 5x5 convolutions after the last fusion: radius 2 + 2 + 2.
    let radius = 3 * (5 - 1) / 2;
    let mut reach = 0usize;
    let mut changed = 0usize;
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                if base.at(c, y, x) != poked.at(c, y, x) {
                    changed += 1;
                    reach = reach.max(y.abs_diff(py).max(x.abs_diff(px)));
                }
            }
        }
    }
    if changed == 0 {
        return Ok(Measurement::new(1.0, "perturbation had no effect"));
    }
    Ok(Measurement::new(
        reach.saturating_sub(radius) as f64,
        format!("{changed} values changed, reach {reach}, radius {radius}"),
    ))
}

fn trained() -> Result<&'static smoke::SmokeRun, String> {
    smoke::shared()
}

fn zero_parallax_beats_bicubic_3db(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let scores = trained()?.scores().map_err(s)?;
    let zp = mean(scores.iter().map(|p| p.zero_parallax));
    let bic = mean(scores.iter().map(|p| p.bicubic));
    Ok(Measurement::new(
        (3.0 - (zp - bic)).max(0.0),
        format!("ref=hr {zp:.2} dB, bicubic {bic:.2} dB"),
    ))
}

fn charbonnier_slope_hand(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let at0 = charbonnier_slope(0.0, 1e-3);
    let at1 = charbonnier_slope(1e-3, 1e-3);
    let want = 1.0 / 2f64.sqrt();
    Ok(Measurement::new(
        at0.abs().max((at1 - want).abs()),
        format!("slope(0) = {at0}, slope(0.001) = {at1}"),
    ))
}

fn mse_bruteforce(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let a = random_image(16, 20, rng);
    let b = random_image(16, 20, rng);
    let got = mse(&a, &b).map_err(s)?;
    let pa: Vec<f64> = a.tensor().data().iter().map(|&v| v as f64).collect();
    let pb: Vec<f64> = b.tensor().data().iter().map(|&v| v as f64).collect();
    let want = oracle::mse(&pa, &pb);
    Ok(Measurement::new((got - want).abs(), format!("mse {got:.6}")))
}

fn planes_of(img: &Image) -> Planes {
    let (c, h, w) = img.tensor().chw();
    Planes::from_f32(c, h, w, img.tensor().data())
}

fn ssim_gap(a: &Image, b: &Image) -> Result<(f64, crossnet::objectives::SsimComponents), String> {
    let got = ssim_components(a, b).map_err(s)?;
    let want = oracle::ssim_terms(&planes_of(a), &planes_of(b));
    let gap = [
        got.ssim - want.ssim,
        got.luminance - want.luminance,
        got.contrast - want.contrast,
        got.structure - want.structure,
    ]
    .iter()
    .fold(0.0f64, |m, d| m.max(d.abs()));
    Ok((gap, got))
}

fn ssim_negative_checkerboard(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let x = Image::from_fn(3, 24, 24, |_, y, x| if (x + y) % 2 == 0 { 0.2 } else { 0.8 });
    let neg = Image::from_fn(3, 24, 24, |c, y, xx| 1.0 - x.at(c, y, xx));
    let (gap, got) = ssim_gap(&x, &neg)?;
    if got.structure > -0.9 {
        return Ok(Measurement::new(1.0, format!("structure {} is not strongly negative", got.structure)));
    }
    Ok(Measurement::new(gap, format!("structure {:.6}", got.structure)))
}

fn ssim_bias_split(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let p = smooth_planes(3, 24, 24, rng);
    let x = Image::from_fn(3, 24, 24, |c, y, xx| p.at(c, y, xx) as f32 * 0.5 + 0.2);
    let y = Image::from_fn(3, 24, 24, |c, yy, xx| x.at(c, yy, xx) + 0.1);
    let (gap, got) = ssim_gap(&x, &y)?;
    if got.luminance >= 1.0 {
        return Ok(Measurement::new(1.0, "luminance term did not drop"));
    }
    Ok(Measurement::new(
        gap.max((got.structure - 1.0).abs()),
        format!("luminance {:.6}, structure {:.9}", got.luminance, got.structure),
    ))
}

fn lr_antialias_fft(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let (h, w, scale) = (16, 256, 8);
    let cycles = 24usize;
    let hr = Image::from_fn(3, h, w, |_, _, x| {
        0.5 + 0.4 * (std::f32::consts::TAU * cycles as f32 * x as f32 / w as f32).cos()
    });
    let lr = make_lr(&hr, scale).map_err(s)?;
    let row_in: Vec<f64> = (0..w).map(|x| hr.at(0, h / 2, x) as f64).collect();
    let row_out: Vec<f64> = (0..w / scale).map(|x| lr.at(0, h / scale / 2, x) as f64).collect();
    let a_in = oracle::fft_amplitude(&row_in, cycles);
    let alias = w / scale - cycles;
    let a_out = oracle::fft_amplitude(&row_out, alias);
    Ok(Measurement::new(
        a_out / a_in,
        format!("amplitude {a_in:.4} at bin {cycles} -> {a_out:.2e} at alias bin {alias}"),
    ))
}

fn angular_cell_uniformity(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let mut lr = vec![0usize; 64];
    let mut rf = vec![0usize; 64];
    for _ in 0..10_000 {
        let (a, b) = sample_positions(8, rng);
        lr[a.0 * 8 + a.1] += 1;
        rf[b.0 * 8 + b.1] += 1;
    }
    let z = oracle::max_multinomial_z(&lr).max(oracle::max_multinomial_z(&rf));
    Ok(Measurement::new(z, "largest |z| over 64 cells, lr and ref positions"))
}

fn parallax_offset_uniformity(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let k = MAX_PARALLAX_OFFSET;
    let n = (2 * k + 1) as usize;
    let (mut dx, mut dy) = (vec![0usize; n], vec![0usize; n]);
    for _ in 0..10_000 {
        let (x, y) = draw_parallax_offset(rng);
        if x.abs() > k || y.abs() > k {
            return Ok(Measurement::new(f64::INFINITY, format!("offset ({x}, {y}) outside the support")));
        }
        dx[(x + k) as usize] += 1;
        dy[(y + k) as usize] += 1;
    }
    if dx.iter().chain(&dy).any(|&c| c == 0) {
        return Ok(Measurement::new(f64::INFINITY, "support not covered"));
    }
    let z = oracle::max_multinomial_z(&dx).max(oracle::max_multinomial_z(&dy));
    Ok(Measurement::new(z, format!("largest |z| over {n} values per axis")))
}

fn smoke_loss_trend(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let run = trained()?;
    let means = run.window_means(200);
    let rises = means.windows(2).filter(|p| p[1] > p[0] * 1.02).count();
    let text: Vec<String> = means.iter().map(|m| format!("{m:.0}")).collect();
    Ok(Measurement::new(rises as f64, format!("200-iteration means {}", text.join(" "))))
}

fn adam_sign_fixed_point(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let g = [2.5f32, -0.01, 1e3, -7.0];
    let lr = 1e-3;
    let mut params = ParameterStore::new();
    params.insert("w", Tensor::zeros(&[4]));
    let mut grads = ParameterStore::new();
    grads.insert("w", Tensor::new(vec![4], g.to_vec()).map_err(s)?);
    let mut state = AdamState::new();
    let cfg = AdamConfig::default();
    let mut before = params.require("w").map_err(s)?.clone();
    for _ in 0..200 {
        before = params.require("w").map_err(s)?.clone();
        adam_step(&mut params, &grads, &mut state, lr, &cfg).map_err(s)?;
    }
    let after = params.require("w").map_err(s)?;
    let err = (0..4)
        .map(|i| {
            let step = after.data()[i] as f64 - before.data()[i] as f64;
            (step + lr * (g[i] as f64).signum()).abs() / lr
        })
        .fold(0.0, f64::max);
    Ok(Measurement::new(err, "relative deviation of the 200th step from -lr*sign(g)"))
}

fn eval_zero_parallax_beats_bicubic(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let scores = trained()?.scores().map_err(s)?;
    let zp = mean(scores.iter().map(|p| p.zero_parallax));
    let bic = mean(scores.iter().map(|p| p.bicubic));
    let wins = scores.iter().filter(|p| p.zero_parallax > p.bicubic).count();
    Ok(Measurement::new(
        (bic - zp).max(0.0),
        format!("ref=hr {zp:.2} dB vs bicubic {bic:.2} dB, better on {wins}/{} pairs", scores.len()),
    ))
}

fn tiled_constant_equals_direct(_: &Subject, rng: &mut ChaCha8Rng) -> Out {
    let cfg = CrossNetConfig {
        scale_factor: 4,
        flow: FlowNetConfig {
            variant: FlowNetVariant::Plus,
            base_channels: 4,
        },
        ..CrossNetConfig::default()
    };
    let params = init_params(&cfg, rng.random());
    let lr = Image::constant(3, 24, 40, 0.3);
    let reference = Image::constant(3, 96, 160, 0.7);
    let spec = TileSpec {
        window: 64,
        stride: 32,
        blend: Blend::Average,
        context: 32,
    };
    let tiled = sliding_window_sr(&lr, &reference, &params, &cfg, &spec).map_err(s)?;
    let (direct, _) = forward(&lr, &reference, &params, &cfg).map_err(s)?;
    let err = tiled.tensor().max_abs_diff(direct.tensor()) as f64;
    Ok(Measurement::new(err, "96x160 canvas, 64 px windows, stride 32"))
}

fn flow_viz_dominant_hue(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let run = trained()?;
    let lf = generate_scene("viz", &smoke::FIXTURE).map_err(s)?;
    let hr = lf.view((1, 1)).clone();
    let lr = make_lr(&hr, run.model.scale_factor).map_err(s)?;
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for shift in [4i64, -4] {
        // A reference moved right by `shift` needs backward flow (+shift, 0).
        let reference = hr.shifted(-shift, 0);
        let want = if shift > 0 { 0.0 } else { 180.0 };
        let (_, flows) = run.predict(&lr, &reference).map_err(s)?;
        for (i, f) in flows.iter().take(4).enumerate() {
            let img = flow_to_color(f, f.max_magnitude().max(1e-6)).map_err(s)?;
            let (h, w) = img.size();
            let mut hues = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    let (r, g, b) = (img.at(0, y, x) as f64, img.at(1, y, x) as f64, img.at(2, y, x) as f64);
                    let sat = 1.0 - r.min(g).min(b) / r.max(g).max(b);
                    if let Some(hue) = oracle::rgb_hue(r, g, b) {
                        hues.push((hue, sat));
                    }
                }
            }
            let dom = oracle::circular_mean(&hues).ok_or("no chromatic pixels")?;
            let d = oracle::hue_distance(dom, want);
            worst = worst.max(d);
            notes.push(format!("{shift:+}@{i}:{dom:.0}"));
        }
    }
    Ok(Measurement::new(worst, format!("dominant hue per shift@scale {}", notes.join(" "))))
}

/// Wall-clock time of every other case. The shared smoke training is counted
/// once even when it ran earlier in the process.
fn suite_wall_clock(_: &Subject, _: &mut ChaCha8Rng) -> Out {
    let trained_before = smoke::is_trained();
    let t0 = Instant::now();
    let report = run_cases(&Subject::default(), &registry(), &Filter::default().without(&["budget"]), crate::SUITE_SEED);
    let mut secs = t0.elapsed().as_secs_f64();
    if trained_before {
        secs += trained()?.seconds;
    }
    Ok(Measurement::new(
        secs,
        format!(
            "{} cases in {secs:.0}s on {} thread(s)",
            report.results.len(),
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    ))
}
