//! `key = value` training configuration files.
//!
//! ```text
//! # ×8 light-field run
//! preset = flower
//! dataset = /data/flower
//! lr_schedule = 150000:1e-5
//! batch_size = 4
//! ```
//!
//! `lr_schedule` is a comma-separated list of `iteration:value` (absolute
//! rate) or `iteration:x<factor>` (multiple of `lr_initial`). A `preset`
//! line selects the starting values; the other keys override it wherever they
//! appear.

use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{CrossNetError, Result};
use crate::flow::FlowNetVariant;
use crate::model::{SisrChoice, Variant};
use crate::objectives::Reduction;
use crate::train::{LrChange, LrStep, TrainConfig};

pub const KEYS: &[&str] = &[
    "preset",
    "total_iterations",
    "lr_initial",
    "lr_schedule",
    "beta1",
    "beta2",
    "adam_eps",
    "batch_size",
    "crop_size",
    "dataset",
    "scale",
    "variant",
    "flow",
    "flow_base_channels",
    "sisr",
    "pretrain_flow_iterations",
    "parallax_augment",
    "seed",
    "epsilon",
    "reduction",
    "checkpoint_every",
    "checkpoint_dir",
    "log_every",
];

fn err(line: usize, message: impl Into<String>) -> CrossNetError {
    CrossNetError::Config {
        line,
        message: message.into(),
    }
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, format!("`{key}` expects a number, got `{v}`")))
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(line, format!("`{key}` expects true or false, got `{v}`"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

pub fn parse_schedule(text: &str) -> std::result::Result<Vec<LrStep>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && *s != "none")
        .map(|item| {
            let (it, val) = item.split_once(':').ok_or_else(|| format!("bad schedule entry `{item}`"))?;
            let iteration = it.trim().parse().map_err(|_| format!("bad iteration in `{item}`"))?;
            let val = val.trim();
            let change = match val.strip_prefix('x') {
                Some(f) => LrChange::Factor(f.parse().map_err(|_| format!("bad factor in `{item}`"))?),
                None => LrChange::Absolute(val.parse().map_err(|_| format!("bad rate in `{item}`"))?),
            };
            Ok(LrStep { iteration, change })
        })
        .collect()
}

fn preset(line: usize, name: &str) -> Result<TrainConfig> {
    match name {
        "flower" => Ok(TrainConfig::flower()),
        "generalization" => Ok(TrainConfig::generalization()),
        "iw_pretrained" => Ok(TrainConfig::iw_pretrained()),
        other => Err(err(line, format!("unknown preset `{other}`"))),
    }
}

/// Parses a configuration file into a validated [`TrainConfig`].
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| err(n, format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            return Err(err(n, format!("unknown key `{k}`")));
        }
        if entries.iter().any(|(_, e, _)| *e == k) {
            return Err(err(n, format!("duplicate key `{k}`")));
        }
        entries.push((n, k, v));
    }
    let mut cfg = match entries.iter().find(|(_, k, _)| k == "preset") {
        Some((n, _, v)) => preset(*n, v)?,
        None => TrainConfig::default(),
    };
    for (n, k, v) in &entries {
        let (n, v) = (*n, v.as_str());
        match k.as_str() {
            "preset" => {}
            "total_iterations" => cfg.total_iterations = num(n, k, v)?,
            "lr_initial" => cfg.lr_initial = num(n, k, v)?,
            "lr_schedule" => cfg.lr_schedule = parse_schedule(v).map_err(|m| err(n, m))?,
            "beta1" => cfg.adam.beta1 = num(n, k, v)?,
            "beta2" => cfg.adam.beta2 = num(n, k, v)?,
            "adam_eps" => cfg.adam.eps = num(n, k, v)?,
            "batch_size" => cfg.batch_size = num(n, k, v)?,
            "crop_size" => cfg.crop_size = num(n, k, v)?,
            "dataset" => cfg.dataset = opt_path(v),
            "scale" => cfg.model.scale_factor = num(n, k, v)?,
            "variant" => cfg.model.variant = Variant::from_str(v).map_err(|m| err(n, m))?,
            "flow" => {
                cfg.model.flow.variant = match v {
                    "flownets" | "plain" => FlowNetVariant::Plain,
                    "flownets_plus" | "plus" => FlowNetVariant::Plus,
                    other => return Err(err(n, format!("unknown flow estimator `{other}`"))),
                }
            }
            "flow_base_channels" => cfg.model.flow.base_channels = num(n, k, v)?,
            "sisr" => {
                cfg.model.sisr = match v {
                    "bicubic" => SisrChoice::Bicubic,
                    _ => match v.strip_prefix("precomputed:") {
                        Some(dir) if !dir.is_empty() => SisrChoice::Precomputed(dir.into()),
                        _ => return Err(err(n, format!("`sisr` expects bicubic or precomputed:<dir>, got `{v}`"))),
                    },
                }
            }
            "pretrain_flow_iterations" => cfg.pretrain_flow_iterations = num(n, k, v)?,
            "parallax_augment" => cfg.parallax_augment = flag(n, k, v)?,
            "seed" => cfg.seed = num(n, k, v)?,
            "epsilon" => cfg.loss.epsilon = num(n, k, v)?,
            "reduction" => {
                cfg.loss.reduction = match v {
                    "sum_pixels_mean_batch" => Reduction::SumPixelsMeanBatch,
                    "mean_all" => Reduction::MeanAll,
                    other => return Err(err(n, format!("unknown reduction `{other}`"))),
                }
            }
            "checkpoint_every" => cfg.checkpoint_every = num(n, k, v)?,
            "checkpoint_dir" => cfg.checkpoint_dir = opt_path(v),
            "log_every" => cfg.log_every = num(n, k, v)?,
            _ => unreachable!("keys are checked above"),
        }
    }
    cfg.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

/// Canonical text form; parsing it gives back the same configuration.
pub fn render_train_config(cfg: &TrainConfig) -> String {
    let schedule = cfg
        .lr_schedule
        .iter()
        .map(|s| match s.change {
            LrChange::Absolute(v) => format!("{}:{v:e}", s.iteration),
            LrChange::Factor(f) => format!("{}:x{f}", s.iteration),
        })
        .collect::<Vec<_>>()
        .join(",");
    let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
    let sisr = match &cfg.model.sisr {
        SisrChoice::Bicubic => "bicubic".to_string(),
        SisrChoice::Precomputed(d) => format!("precomputed:{}", d.display()),
    };
    let flow = match cfg.model.flow.variant {
        FlowNetVariant::Plain => "flownets",
        FlowNetVariant::Plus => "flownets_plus",
    };
    let reduction = match cfg.loss.reduction {
        Reduction::SumPixelsMeanBatch => "sum_pixels_mean_batch",
        Reduction::MeanAll => "mean_all",
    };
    let lines = [
        ("total_iterations", cfg.total_iterations.to_string()),
        ("lr_initial", format!("{:e}", cfg.lr_initial)),
        ("lr_schedule", if schedule.is_empty() { "none".into() } else { schedule }),
        ("beta1", cfg.adam.beta1.to_string()),
        ("beta2", cfg.adam.beta2.to_string()),
        ("adam_eps", format!("{:e}", cfg.adam.eps)),
        ("batch_size", cfg.batch_size.to_string()),
        ("crop_size", cfg.crop_size.to_string()),
        ("dataset", path(&cfg.dataset)),
        ("scale", cfg.model.scale_factor.to_string()),
        ("variant", cfg.model.variant.name().to_string()),
        ("flow", flow.to_string()),
        ("flow_base_channels", cfg.model.flow.base_channels.to_string()),
        ("sisr", sisr),
        ("pretrain_flow_iterations", cfg.pretrain_flow_iterations.to_string()),
        ("parallax_augment", cfg.parallax_augment.to_string()),
        ("seed", cfg.seed.to_string()),
        ("epsilon", cfg.loss.epsilon.to_string()),
        ("reduction", reduction.to_string()),
        ("checkpoint_every", cfg.checkpoint_every.to_string()),
        ("checkpoint_dir", path(&cfg.checkpoint_dir)),
        ("log_every", cfg.log_every.to_string()),
    ];
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = parse_train_config("# empty\n").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        let cfg = parse_train_config("batch_size = 2\npreset = generalization\nseed = 9 # trailing\n").unwrap();
        assert_eq!(cfg.batch_size, 2);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.lr_initial, 7e-5);
    }

    #[test]
    fn round_trip() {
        for mut cfg in [TrainConfig::flower(), TrainConfig::generalization(), TrainConfig::iw_pretrained()] {
            cfg.dataset = Some("/data/x".into());
            cfg.model.sisr = SisrChoice::Precomputed("/tmp/mdsr".into());
            assert_eq!(parse_train_config(&render_train_config(&cfg)).unwrap(), cfg);
        }
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_train_config("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(e, CrossNetError::Config { line: 2, .. }));
        let e = parse_train_config("seed = x\n").unwrap_err();
        assert!(matches!(e, CrossNetError::Config { line: 1, .. }));
        assert!(parse_train_config("seed = 1\nseed = 2\n").is_err());
        assert!(parse_train_config("no equals sign\n").is_err());
        assert!(parse_train_config("lr_schedule = 10:1e-5, 5:1e-6\n").is_err());
    }

    #[test]
    fn schedule_syntax() {
        let s = parse_schedule("50000:x0.5, 150000:1e-5").unwrap();
        assert_eq!(s[0].change, LrChange::Factor(0.5));
        assert_eq!(s[1].change, LrChange::Absolute(1e-5));
        assert!(parse_schedule("abc").is_err());
    }
}
