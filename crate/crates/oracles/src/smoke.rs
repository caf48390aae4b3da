//! Desk-scale overfit run on the synthetic light field.
//!
//! One run is shared by every check that needs a trained model.

use std::sync::OnceLock;
use std::time::Instant;

use crossnet::encoder::{sisr_upsample, BicubicSisr};
use crossnet::lightfield::{make_pair, SamplePair};
use crossnet::objectives::psnr;
use crossnet::synthetic::{generate_scene, SceneSpec};
use crossnet::train::{train_until, LogRow, Start, TrainConfig, TrainData};
use crossnet::{forward, CrossNetConfig, FlowField, Image, ParameterStore};

use crate::reference::median;

/// The fixture: a 96×96 base texture seen from a 3×3 grid, 2 px disparity per step.
pub const FIXTURE: SceneSpec = SceneSpec {
    height: 96,
    width: 96,
    grid: 3,
    disparity: 2,
    seed: 11,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SmokeSettings {
    pub scale: usize,
    pub crop: usize,
    pub iterations: u64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SmokeSettings {
    fn default() -> Self {
        Self {
            scale: 8,
            crop: 64,
            iterations: 2000,
            lr: 1e-4,
            seed: 0,
        }
    }
}

/// Eight horizontal-parallax training pairs, disparity 2 or 4 px, in both directions.
pub fn fixture_pairs(scale: usize) -> crossnet::Result<Vec<SamplePair>> {
    let lf = generate_scene("smoke", &FIXTURE)?;
    let mut pairs = Vec::new();
    for r in [0usize, 2] {
        for (l, f) in [(1usize, 0usize), (0, 1), (2, 0), (0, 2)] {
            pairs.push(make_pair(&lf, (r, l), (r, f), scale)?);
        }
    }
    Ok(pairs)
}

pub fn smoke_config(s: &SmokeSettings) -> TrainConfig {
    let mut cfg = TrainConfig {
        total_iterations: s.iterations,
        lr_initial: s.lr,
        lr_schedule: Vec::new(),
        batch_size: 1,
        crop_size: s.crop,
        seed: s.seed,
        log_every: 1,
        checkpoint_every: s.iterations.max(1),
        checkpoint_dir: None,
        ..TrainConfig::flower()
    };
    cfg.model.scale_factor = s.scale;
    cfg
}

pub struct SmokeRun {
    pub settings: SmokeSettings,
    pub pairs: Vec<SamplePair>,
    pub model: CrossNetConfig,
    pub params: ParameterStore,
    pub log: Vec<LogRow>,
    pub seconds: f64,
}

/// Per-pair numbers after training, on the full 96×96 views.
#[derive(Clone, Debug)]
pub struct PairScore {
    pub lr_pos: (usize, usize),
    pub ref_pos: (usize, usize),
    pub true_flow: (f64, f64),
    pub median_flow: (f64, f64),
    pub psnr: f64,
    pub bicubic: f64,
    pub zero_parallax: f64,
    pub ref_zeroed: f64,
}

impl SmokeRun {
    pub fn train(settings: SmokeSettings, mut progress: impl FnMut(&LogRow)) -> crossnet::Result<Self> {
        let pairs = fixture_pairs(settings.scale)?;
        let cfg = smoke_config(&settings);
        let t0 = Instant::now();
        let out = train_until(&cfg, &TrainData::Pairs(pairs.clone()), Start::Fresh, settings.iterations, |r| progress(r))?;
        Ok(Self {
            settings,
            pairs,
            model: cfg.model,
            params: out.params,
            log: out.log,
            seconds: t0.elapsed().as_secs_f64(),
        })
    }

    /// Mean loss over a 25-iteration window centred on `iteration`, clipped to the run.
    pub fn smoothed_loss(&self, iteration: u64) -> f64 {
        let last = self.log.last().map_or(0, |r| r.iteration);
        let lo = iteration.saturating_sub(12).max(1);
        let hi = (iteration + 12).min(last);
        let (lo, hi) = if hi - lo < 24 { (hi.saturating_sub(24).max(1), hi) } else { (lo, hi) };
        let w: Vec<f64> = self
            .log
            .iter()
            .filter(|r| r.iteration >= lo && r.iteration <= hi)
            .map(|r| r.loss)
            .collect();
        w.iter().sum::<f64>() / w.len() as f64
    }

    /// Smoothed loss at iteration 50 divided by the smoothed loss at the end.
    pub fn loss_drop(&self) -> f64 {
        let last = self.log.last().map_or(0, |r| r.iteration);
        self.smoothed_loss(50) / self.smoothed_loss(last)
    }

    /// Means of consecutive windows of `len` iterations.
    pub fn window_means(&self, len: usize) -> Vec<f64> {
        self.log
            .chunks(len)
            .filter(|c| c.len() == len)
            .map(|c| c.iter().map(|r| r.loss).sum::<f64>() / len as f64)
            .collect()
    }

    pub fn predict(&self, lr: &Image, reference: &Image) -> crossnet::Result<(Image, Vec<FlowField>)> {
        let (img, flows) = forward(lr, reference, &self.params, &self.model)?;
        Ok((img, flows.levels().to_vec()))
    }

    pub fn scores(&self) -> crossnet::Result<Vec<PairScore>> {
        let (h, w) = self.pairs[0].hr.size();
        let black = Image::constant(3, h, w, 0.0);
        self.pairs
            .iter()
            .map(|p| {
                let (pred, flows) = self.predict(&p.lr, &p.reference)?;
                let (zp, _) = self.predict(&p.lr, &p.hr)?;
                let (z0, _) = self.predict(&p.lr, &black)?;
                let bic = sisr_upsample(&p.lr, self.model.scale_factor, &BicubicSisr, None)?;
                let (tu, tv) = FIXTURE.true_flow(p.lr_pos, p.ref_pos);
                Ok(PairScore {
                    lr_pos: p.lr_pos,
                    ref_pos: p.ref_pos,
                    true_flow: (tu as f64, tv as f64),
                    median_flow: central_median(&flows[0], 0.5),
                    psnr: psnr(&pred, &p.hr, 1.0)?,
                    bicubic: psnr(&bic, &p.hr, 1.0)?,
                    zero_parallax: psnr(&zp, &p.hr, 1.0)?,
                    ref_zeroed: psnr(&z0, &p.hr, 1.0)?,
                })
            })
            .collect()
    }
}

/// Per-component median over the central `frac` of each axis.
pub fn central_median(flow: &FlowField, frac: f64) -> (f64, f64) {
    let (h, w) = flow.size();
    let (mh, mw) = (((h as f64) * (1.0 - frac) / 2.0) as usize, ((w as f64) * (1.0 - frac) / 2.0) as usize);
    let (mut us, mut vs) = (Vec::new(), Vec::new());
    for y in mh..h - mh {
        for x in mw..w - mw {
            let (u, v) = flow.at(y, x);
            us.push(u as f64);
            vs.push(v as f64);
        }
    }
    (median(us), median(vs))
}

pub fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

static SHARED: OnceLock<Result<SmokeRun, String>> = OnceLock::new();

/// The default smoke run, trained once per process. Progress goes to stderr
/// every 100 iterations.
pub fn shared() -> Result<&'static SmokeRun, String> {
    SHARED
        .get_or_init(|| {
            SmokeRun::train(SmokeSettings::default(), |r| {
                if r.iteration % 100 == 0 {
                    eprintln!("  smoke iter {:>5} loss {:>10.3} psnr {:>6.2} {:>7.0}s", r.iteration, r.loss, r.train_psnr, r.wall_time);
                }
            })
            .map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(|e| e.clone())
}

/// Whether [`shared`] has already finished training.
pub fn is_trained() -> bool {
    SHARED.get().is_some()
}
