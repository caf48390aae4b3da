//! Optimisation loop: sampling, forward/backward, Adam, schedules, checkpoints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::encoder::{sisr_upsample, SisrUpsampler};
use crate::error::{domain_err, CrossNetError, Result};
use crate::flow::flow_graph;
use crate::graph::Graph;
use crate::imaging::{Image, SIZE_MULTIPLE};
use crate::lightfield::{
    augment_parallax, draw_parallax_offset, make_lr, pair_id, random_crop, sample_positions, Dataset, LightField, SamplePair, Split,
};
use crate::model::{forward_graph, init_params, CrossNetConfig};
use crate::objectives::{psnr, LossConfig, PSNR_CAP_DB};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::{ParamBinder, ParameterStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrChange {
    /// New learning rate.
    Absolute(f64),
    /// Multiplier of the initial learning rate.
    Factor(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrStep {
    pub iteration: u64,
    pub change: LrChange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_iterations: u64,
    pub lr_initial: f64,
    pub lr_schedule: Vec<LrStep>,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub crop_size: usize,
    pub dataset: Option<PathBuf>,
    pub model: CrossNetConfig,
    /// Flow-only iterations run before joint training; the schedule and the
    /// optimiser state restart when joint training begins.
    pub pretrain_flow_iterations: u64,
    pub parallax_augment: bool,
    pub seed: u64,
    pub loss: LossConfig,
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::flower()
    }
}

impl TrainConfig {
    /// ×8 light-field schedule: 1e-4, dropping to 1e-5 at 150K of 200K iterations.
    pub fn flower() -> Self {
        Self {
            total_iterations: 200_000,
            lr_initial: 1e-4,
            lr_schedule: vec![LrStep {
                iteration: 150_000,
                change: LrChange::Absolute(1e-5),
            }],
            adam: AdamConfig::default(),
            batch_size: 4,
            crop_size: 160,
            dataset: None,
            model: CrossNetConfig::default(),
            pretrain_flow_iterations: 0,
            parallax_augment: false,
            seed: 0,
            loss: LossConfig::default(),
            checkpoint_every: 5_000,
            checkpoint_dir: None,
            log_every: 100,
        }
    }

    /// Generalization schedule: 7e-5 with factors 0.5, 0.2, 0.1 at 50K, 100K, 150K.
    pub fn generalization() -> Self {
        let step = |iteration, f| LrStep {
            iteration,
            change: LrChange::Factor(f),
        };
        Self {
            lr_initial: 7e-5,
            lr_schedule: vec![step(50_000, 0.5), step(100_000, 0.2), step(150_000, 0.1)],
            parallax_augment: true,
            ..Self::flower()
        }
    }

    /// Image-warping variant with 100K flow-pretraining iterations followed by
    /// 100K joint iterations.
    pub fn iw_pretrained() -> Self {
        let mut cfg = Self {
            total_iterations: 100_000,
            pretrain_flow_iterations: 100_000,
            lr_schedule: vec![LrStep {
                iteration: 75_000,
                change: LrChange::Absolute(1e-5),
            }],
            ..Self::flower()
        };
        cfg.model.variant = crate::model::Variant::CrossnetIw;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.adam.validate()?;
        self.loss.validate()?;
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return domain_err!("initial learning rate must be positive");
        }
        let mut prev = None;
        for s in &self.lr_schedule {
            if prev.is_some_and(|p| s.iteration <= p) {
                return domain_err!("schedule iterations must be strictly increasing");
            }
            if s.iteration >= self.total_iterations {
                return domain_err!("schedule step at {} is not before the end ({})", s.iteration, self.total_iterations);
            }
            let v = match s.change {
                LrChange::Absolute(v) | LrChange::Factor(v) => v,
            };
            if !(v > 0.0 && v.is_finite()) {
                return domain_err!("schedule values must be positive");
            }
            prev = Some(s.iteration);
        }
        if self.batch_size == 0 {
            return domain_err!("batch size must be positive");
        }
        if self.crop_size == 0 || self.crop_size % SIZE_MULTIPLE != 0 || self.crop_size % self.model.scale_factor != 0 {
            return domain_err!("crop size {} must be a positive multiple of {}", self.crop_size, SIZE_MULTIPLE);
        }
        if self.checkpoint_every == 0 || self.log_every == 0 {
            return domain_err!("checkpoint and log intervals must be positive");
        }
        Ok(())
    }

    /// Learning rate at `iteration` counted from the start of the current phase.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        let mut lr = self.lr_initial;
        for s in self.lr_schedule.iter().take_while(|s| s.iteration <= iteration) {
            lr = match s.change {
                LrChange::Absolute(v) => v,
                LrChange::Factor(f) => self.lr_initial * f,
            };
        }
        lr
    }

    /// Iterations over both phases.
    pub fn total_steps(&self) -> u64 {
        self.pretrain_flow_iterations + self.total_iterations
    }

    /// Phase and phase-local iteration of global iteration `t`.
    pub fn phase_at(&self, t: u64) -> (Phase, u64) {
        if t < self.pretrain_flow_iterations {
            (Phase::FlowPretrain, t)
        } else {
            (Phase::Joint, t - self.pretrain_flow_iterations)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Flow estimator only, trained to warp the reference onto the target.
    FlowPretrain,
    Joint,
}

/// Training examples: light fields sampled with the angular protocol, or a
/// fixed list of pairs.
#[derive(Clone, Debug)]
pub enum TrainData {
    Fields(Vec<LightField>),
    Pairs(Vec<SamplePair>),
}

impl TrainData {
    /// Loads the training split only.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        Ok(Self::Fields(ds.load_split(Split::Train)?))
    }

    fn check(&self, cfg: &TrainConfig) -> Result<()> {
        let sizes: Vec<(usize, usize)> = match self {
            TrainData::Fields(f) => f.iter().map(|lf| lf.size()).collect(),
            TrainData::Pairs(p) => {
                for pair in p {
                    pair.check()?;
                    if pair.scale != cfg.model.scale_factor {
                        return domain_err!("pair `{}` has scale {}", pair.id, pair.scale);
                    }
                }
                p.iter().map(|pair| pair.hr.size()).collect()
            }
        };
        if sizes.is_empty() {
            return domain_err!("no training data");
        }
        if let Some(s) = sizes.iter().find(|s| s.0 < cfg.crop_size || s.1 < cfg.crop_size) {
            return domain_err!("training image {:?} is smaller than the {} crop", s, cfg.crop_size);
        }
        Ok(())
    }
}

/// Draws one training example for the current iteration.
pub fn draw_sample<R: Rng + ?Sized>(data: &TrainData, cfg: &TrainConfig, rng: &mut R) -> Result<SamplePair> {
    let s = cfg.model.scale_factor;
    let crop = cfg.crop_size;
    match data {
        TrainData::Fields(fields) => {
            let lf = &fields[rng.random_range(0..fields.len())];
            let (lr_pos, ref_pos) = sample_positions(lf.grid(), rng);
            let (h, w) = lf.size();
            let y = rng.random_range(0..=(h - crop) / s) * s;
            let x = rng.random_range(0..=(w - crop) / s) * s;
            let reference = if cfg.parallax_augment {
                let (dx, dy) = draw_parallax_offset(rng);
                lf.view(ref_pos).shifted(dx, dy)
            } else {
                lf.view(ref_pos).clone()
            };
            let hr = lf.view(lr_pos).crop(y, x, crop, crop);
            Ok(SamplePair {
                lr: make_lr(&hr, s)?,
                reference: reference.crop(y, x, crop, crop),
                hr,
                lr_pos,
                ref_pos,
                scale: s,
                id: pair_id(lf.scene_id(), lr_pos),
            })
        }
        TrainData::Pairs(pairs) => {
            let pair = &pairs[rng.random_range(0..pairs.len())];
            let cropped = random_crop(pair, crop, rng)?;
            Ok(if cfg.parallax_augment {
                augment_parallax(&cropped, rng)
            } else {
                cropped
            })
        }
    }
}

/// Random stream of global iteration `t`; independent of how the run was split.
pub fn iteration_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub lr: f64,
    pub loss: f64,
    pub train_psnr: f64,
    pub wall_time: f64,
}

pub const LOG_HEADER: &str = "iteration,lr,loss,train_psnr,wall_time";

impl LogRow {
    pub fn csv(&self) -> String {
        format!("{},{:e},{:.9e},{:.6},{:.3}", self.iteration, self.lr, self.loss, self.train_psnr, self.wall_time)
    }
}

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Where a run starts.
#[derive(Clone, Debug)]
pub enum Start {
    /// Random initialisation from the config seed.
    Fresh,
    /// Given weights, fresh optimiser, iteration 0.
    Params(ParameterStore),
    /// Continue a checkpointed run.
    Resume(Box<Checkpoint>),
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParameterStore,
    pub optimizer: AdamState,
    /// Iterations completed.
    pub iteration: u64,
    pub log: Vec<LogRow>,
    pub last_checkpoint: Option<PathBuf>,
}

/// Loss, mean train PSNR and gradients of one batch.
pub struct BatchResult {
    pub loss: f64,
    pub psnr: f64,
    pub grads: ParameterStore,
}

fn accumulate(into: &mut ParameterStore, name: &str, mut g: Tensor, scale: f32) {
    match into.get_mut(name) {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
        None => {
            if scale != 1.0 {
                g.scale_assign(scale);
            }
            into.insert(name, g);
        }
    }
}

/// Forward and backward over a batch, one graph per example.
pub fn batch_gradients(
    params: &ParameterStore,
    cfg: &TrainConfig,
    phase: Phase,
    batch: &[SamplePair],
    sisr: &dyn SisrUpsampler,
) -> Result<BatchResult> {
    let s = cfg.model.scale_factor;
    let mut grads = ParameterStore::new();
    let mut loss = 0.0f64;
    let mut psnr_sum = 0.0f64;
    for pair in batch {
        let lr_up = sisr_upsample(&pair.lr, s, sisr, Some(&pair.id))?;
        let norm = cfg.loss.normalizer(batch.len(), pair.hr.tensor().len());
        let mut g = Graph::new();
        let mut p = ParamBinder::new(params);
        let a = g.input(lr_up.into_tensor());
        let b = g.input(pair.reference.tensor().clone());
        let target = g.input(pair.hr.tensor().clone());
        let out = match phase {
            Phase::Joint => forward_graph(&mut g, &mut p, &cfg.model, cfg.model.variant, a, b)?.prediction,
            Phase::FlowPretrain => {
                let flows = flow_graph(&mut g, &mut p, &cfg.model.flow, a, b)?;
                g.warp(b, flows[0])?
            }
        };
        let l = g.charbonnier_sum(out, target, cfg.loss.epsilon)?;
        loss += g.value(l).data()[0] as f64 * norm;
        if !loss.is_finite() {
            break;
        }
        let pred = Image::new(g.value(out).clone())?;
        psnr_sum += psnr(&pred, &pair.hr, 1.0)?.min(PSNR_CAP_DB);
        let mut gr = g.backward(l)?;
        for (name, var) in p.bound() {
            if let Some(t) = gr.take(var) {
                accumulate(&mut grads, name, t, norm as f32);
            }
        }
    }
    Ok(BatchResult {
        loss,
        psnr: psnr_sum / batch.len() as f64,
        grads,
    })
}

pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("ckpt_{iteration:08}.bin"))
}

/// Trains for the full configured length.
pub fn train(cfg: &TrainConfig, data: &TrainData, start: Start) -> Result<TrainOutcome> {
    train_until(cfg, data, start, cfg.total_steps(), |r| {
        log::info!("iter {} lr {:.2e} loss {:.4} psnr {:.2}", r.iteration, r.lr, r.loss, r.train_psnr)
    })
}

/// Trains until `until` global iterations have completed (capped at the
/// configured total), reporting every log row to `on_row`.
pub fn train_until(
    cfg: &TrainConfig,
    data: &TrainData,
    start: Start,
    until: u64,
    mut on_row: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.check(cfg)?;
    let (mut params, mut state, first) = match start {
        Start::Fresh => (init_params(&cfg.model, cfg.seed), AdamState::new(), 0),
        Start::Params(p) => {
            cfg.model.check_params(&p)?;
            (p, AdamState::new(), 0)
        }
        Start::Resume(ck) => {
            if ck.model != cfg.model {
                return Err(CrossNetError::Checkpoint("checkpoint model config differs from the run".into()));
            }
            let opt = ck.optimizer.unwrap_or_default();
            (ck.params, opt, ck.iteration)
        }
    };
    let until = until.min(cfg.total_steps());
    let sisr = cfg.model.sisr.upsampler();
    let echo = serde_json::to_value(cfg)?;
    let started = Instant::now();
    let mut log = Vec::new();
    let mut last_checkpoint = None;
    for t in first..until {
        let (phase, local) = cfg.phase_at(t);
        if t == cfg.pretrain_flow_iterations && t > 0 {
            state = AdamState::new();
        }
        let lr = cfg.lr_at(local);
        let mut rng = iteration_rng(cfg.seed, t);
        let batch = (0..cfg.batch_size)
            .map(|_| draw_sample(data, cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let res = batch_gradients(&params, cfg, phase, &batch, sisr.as_ref())?;
        if !res.loss.is_finite() || res.grads.iter().any(|(_, g)| !g.is_finite()) {
            return Err(CrossNetError::NonFiniteLoss {
                iteration: t + 1,
                last_checkpoint,
            });
        }
        adam_step(&mut params, &res.grads, &mut state, lr, &cfg.adam)?;
        let done = t + 1;
        if done % cfg.log_every == 0 || done == until {
            let row = LogRow {
                iteration: done,
                lr,
                loss: res.loss,
                train_psnr: res.psnr,
                wall_time: started.elapsed().as_secs_f64(),
            };
            on_row(&row);
            log.push(row);
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            if done % cfg.checkpoint_every == 0 || done == until {
                let path = checkpoint_path(dir, done);
                Checkpoint {
                    iteration: done,
                    model: cfg.model.clone(),
                    train: Some(echo.clone()),
                    params: params.clone(),
                    optimizer: Some(state.clone()),
                }
                .save(&path)?;
                last_checkpoint = Some(path);
            }
        }
    }
    Ok(TrainOutcome {
        params,
        optimizer: state,
        iteration: until.max(first),
        log,
        last_checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowNetConfig, FlowNetVariant};
    use crate::synthetic::{generate_scene, SceneSpec};

    fn tiny() -> TrainConfig {
        TrainConfig {
            total_iterations: 6,
            lr_schedule: vec![LrStep {
                iteration: 3,
                change: LrChange::Factor(0.5),
            }],
            batch_size: 2,
            crop_size: 32,
            model: CrossNetConfig {
                scale_factor: 4,
                flow: FlowNetConfig {
                    variant: FlowNetVariant::Plain,
                    base_channels: 2,
                },
                ..CrossNetConfig::default()
            },
            checkpoint_every: 2,
            log_every: 1,
            ..TrainConfig::flower()
        }
    }

    fn data() -> TrainData {
        let spec = SceneSpec {
            height: 48,
            width: 48,
            grid: 2,
            disparity: 1,
            seed: 3,
        };
        TrainData::Fields(vec![generate_scene("a", &spec).unwrap()])
    }

    #[test]
    fn schedules() {
        let f = TrainConfig::flower();
        assert_eq!(f.lr_at(0), 1e-4);
        assert_eq!(f.lr_at(149_999), 1e-4);
        assert_eq!(f.lr_at(150_000), 1e-5);
        let g = TrainConfig::generalization();
        assert_eq!(g.lr_at(49_999), 7e-5);
        assert_eq!(g.lr_at(50_000), 7e-5 * 0.5);
        assert_eq!(g.lr_at(100_000), 7e-5 * 0.2);
        assert_eq!(g.lr_at(199_999), 7e-5 * 0.1);
        f.validate().unwrap();
        g.validate().unwrap();
        TrainConfig::iw_pretrained().validate().unwrap();
    }

    #[test]
    fn invalid_schedules() {
        let mut c = TrainConfig::flower();
        c.lr_schedule.push(LrStep {
            iteration: 100,
            change: LrChange::Absolute(1e-6),
        });
        assert!(c.validate().is_err());
        let mut c = TrainConfig::flower();
        c.lr_schedule[0].iteration = 200_000;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::flower();
        c.crop_size = 100;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pretraining_touches_only_the_flow() {
        let cfg = TrainConfig {
            pretrain_flow_iterations: 2,
            total_iterations: 1,
            lr_schedule: vec![],
            checkpoint_dir: None,
            ..tiny()
        };
        let init = init_params(&cfg.model, 1);
        let out = train_until(&cfg, &data(), Start::Params(init.clone()), 2, |_| {}).unwrap();
        for (name, t) in out.params.iter() {
            let moved = t != init.get(name).unwrap();
            if !name.starts_with("flow.") {
                assert!(!moved, "{name} changed during flow pretraining");
            }
        }
        assert!(out.params.iter().any(|(n, t)| n.starts_with("flow.") && t != init.get(n).unwrap()));
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..tiny()
        };
        let full = train(&cfg, &data(), Start::Fresh).unwrap();
        assert_eq!(full.log.len(), 6);
        assert_eq!(full.log[3].lr, 5e-5);
        let ck = Checkpoint::load(&checkpoint_path(dir.path(), 4)).unwrap();
        let resumed = train(&cfg, &data(), Start::Resume(Box::new(ck))).unwrap();
        assert_eq!(resumed.params, full.params);
        assert_eq!(resumed.optimizer, full.optimizer);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let cfg = tiny();
        let mut params = init_params(&cfg.model, 0);
        params.get_mut("dec.out.bias").unwrap().data_mut()[0] = f32::NAN;
        let err = train(&cfg, &data(), Start::Params(params)).unwrap_err();
        assert!(matches!(err, CrossNetError::NonFiniteLoss { iteration: 1, .. }));
    }
}
