//! `crossnet` command-line front end. Each subcommand parses its flags and
//! hands off to the library.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crossnet::checkpoint::Checkpoint;
use crossnet::config::{parse_train_config, render_train_config};
use crossnet::eval::{evaluate, evaluate_bicubic, MetricTable};
use crossnet::flow::flow_to_color;
use crossnet::io::{load_png, save_png};
use crossnet::lightfield::{Dataset, Protocol, Split};
use crossnet::model::{forward, Variant};
use crossnet::report::{config_hash, emit_report, parse_table_csv, psnr_plot_svg, table_csv};
use crossnet::tiling::{sliding_window_sr, Blend, TileSpec};
use crossnet::train::{train_until, write_log_csv, Start, TrainData};
use crossnet::{CrossNetError, Image};

pub const DATA_ROOT_ENV: &str = "CROSSNET_DATA_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "crossnet", version, about = "Reference-based super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on the training split of a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the angular protocol and write a CSV table.
    Eval(EvalArgs),
    /// Super-resolve one image with sliding windows.
    Sr(SrArgs),
    /// Render the estimated flow pyramid as colour images.
    FlowViz(FlowVizArgs),
    /// Turn metric CSVs into per-dataset tables and PSNR plots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root; overrides the config and the environment.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory for the log, checkpoints and final weights.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many iterations in total.
    #[arg(long)]
    iterations: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Positions {
    /// Reference (0, 0), LR (i, i).
    Diagonal,
    /// Reference (0, 0), LR (i, 0).
    Column,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "diagonal")]
    positions: Positions,
    /// CSV output; a plot is written next to it with an `.svg` extension.
    #[arg(long)]
    out: PathBuf,
    /// Evaluate the training split instead of the held-out one.
    #[arg(long)]
    train_split: bool,
    /// Add the bicubic baseline to the plot.
    #[arg(long)]
    baseline: bool,
    /// Tile inputs larger than this window.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 256)]
    stride: usize,
    /// Context pixels around each window.
    #[arg(long, default_value_t = 32)]
    context: usize,
}

#[derive(Debug, Args)]
struct SrArgs {
    #[arg(long)]
    lr: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Upsampling factor; defaults to the checkpoint's.
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long, default_value_t = 512)]
    window: usize,
    #[arg(long, default_value_t = 256)]
    stride: usize,
    #[arg(long, default_value = "average")]
    blend: Blend,
    /// Context pixels around each window.
    #[arg(long, default_value_t = 32)]
    context: usize,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FlowVizArgs {
    #[arg(long)]
    lr: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scale: Option<usize>,
    /// Flow magnitude drawn at full saturation, in full-resolution pixels.
    #[arg(long)]
    max_flow: Option<f32>,
    /// Number of pyramid levels to render, starting at full resolution.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Metric CSVs as `method=path` or plain paths (method = file stem).
    #[arg(long, num_args = 1.., required = true)]
    tables: Vec<String>,
    #[arg(long, default_value = "dataset")]
    dataset_name: String,
    /// File whose content is hashed into the report.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(CrossNetError),
}

impl From<CrossNetError> for CliError {
    fn from(e: CrossNetError) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let res = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sr(a) => cmd_sr(a),
        Command::FlowViz(a) => cmd_flow_viz(a),
        Command::Report(a) => cmd_report(a),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn data_root(arg: Option<PathBuf>) -> CliResult<PathBuf> {
    arg.or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("no dataset given; pass --dataset or set {DATA_ROOT_ENV}")))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Ok(Checkpoint::load(path)?)
}

/// Loads the LR/REF pair and checks the size ratio before any work is done.
fn load_pair(lr: &Path, reference: &Path, scale: usize) -> CliResult<(Image, Image)> {
    let lr = load_png(lr)?;
    let reference = load_png(reference)?;
    if reference.size() != (lr.height() * scale, lr.width() * scale) {
        return Err(CliError::Usage(format!(
            "size ratio mismatch: reference is {}x{} but {scale}x the LR ({}x{}) is {}x{}",
            reference.height(),
            reference.width(),
            lr.height(),
            lr.width(),
            lr.height() * scale,
            lr.width() * scale
        )));
    }
    Ok((lr, reference))
}

fn check_scale(scale: usize) -> CliResult<usize> {
    if matches!(scale, 4 | 8) {
        Ok(scale)
    } else {
        Err(CliError::Usage(format!("--scale must be 4 or 8, got {scale}")))
    }
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            parse_train_config(&text).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => Default::default(),
    };
    let root = data_root(a.dataset.or(cfg.dataset.clone()))?;
    cfg.dataset = Some(root.clone());
    if cfg.checkpoint_dir.is_none() {
        cfg.checkpoint_dir = Some(a.out.join("checkpoints"));
    }
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("config.txt"), render_train_config(&cfg))?;
    let data = TrainData::from_dataset(&Dataset::open(&root)?)?;
    let start = match &a.resume {
        Some(p) => Start::Resume(Box::new(load_checkpoint(p)?)),
        None => Start::Fresh,
    };
    let until = a.iterations.unwrap_or(cfg.total_steps());
    let out = train_until(&cfg, &data, start, until, |r| {
        eprintln!(
            "iter {:>7}  lr {:.2e}  loss {:.4}  psnr {:.2} dB  {:.0}s",
            r.iteration, r.lr, r.loss, r.train_psnr, r.wall_time
        )
    })?;
    write_log_csv(&a.out.join("train_log.csv"), &out.log)?;
    let final_path = a.out.join("final.ckpt");
    Checkpoint {
        iteration: out.iteration,
        model: cfg.model.clone(),
        train: None,
        params: out.params,
        optimizer: Some(out.optimizer),
    }
    .save(&final_path)?;
    println!("trained to iteration {}; weights in {}", out.iteration, final_path.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let root = data_root(a.dataset)?;
    let ds = Dataset::open(&root)?;
    let split = if a.train_split { Split::Train } else { Split::Test };
    let fields = ds.load_split(split)?;
    let protocol = match a.positions {
        Positions::Diagonal => Protocol::Diagonal,
        Positions::Column => Protocol::Column,
    };
    let tiles = match a.window {
        Some(window) => {
            let t = TileSpec {
                window,
                stride: a.stride,
                blend: Blend::Average,
                context: a.context,
            };
            t.validate(ck.model.scale_factor).map_err(|e| CliError::Usage(e.to_string()))?;
            Some(t)
        }
        None => None,
    };
    let dataset_name = root.file_name().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
    let mut table = evaluate(&ck.params, &ck.model, &fields, protocol, tiles.as_ref())?;
    table.dataset = dataset_name.clone();
    let mut tables: Vec<MetricTable> = vec![table];
    if a.baseline {
        let mut b = evaluate_bicubic(&fields, ck.model.scale_factor, protocol)?;
        b.dataset = dataset_name;
        tables.push(b);
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, table_csv(&tables[0]))?;
    let hash = config_hash(&format!("{:?}|{:?}|{}", ck.model, protocol, ck.iteration));
    let refs: Vec<&MetricTable> = tables.iter().collect();
    let title = format!("{} x{}", tables[0].dataset, ck.model.scale_factor);
    std::fs::write(a.out.with_extension("svg"), psnr_plot_svg(&refs, &title, &hash)?)?;
    for r in tables[0].mean_rows().iter().filter(|r| r.lr_pos.is_none()) {
        println!("mean PSNR {:.3} dB, SSIM {:.4} over {} pairs", r.psnr, r.ssim, tables[0].rows.len());
    }
    Ok(())
}

fn cmd_sr(a: SrArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let mut cfg = ck.model.clone();
    cfg.scale_factor = check_scale(a.scale.unwrap_or(cfg.scale_factor))?;
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    let spec = TileSpec {
        window: a.window,
        stride: a.stride,
        blend: a.blend,
        context: a.context,
    };
    spec.validate(cfg.scale_factor).map_err(|e| CliError::Usage(e.to_string()))?;
    let (lr, reference) = load_pair(&a.lr, &a.reference, cfg.scale_factor)?;
    let t = Instant::now();
    let out = sliding_window_sr(&lr, &reference, &ck.params, &cfg, &spec)?;
    let secs = t.elapsed().as_secs_f64();
    save_png(&a.out, &out)?;
    println!("wrote {} ({}x{}) in {secs:.2}s", a.out.display(), out.height(), out.width());
    Ok(())
}

fn cmd_flow_viz(a: FlowVizArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let mut cfg = ck.model.clone();
    cfg.scale_factor = check_scale(a.scale.unwrap_or(cfg.scale_factor))?;
    let (lr, reference) = load_pair(&a.lr, &a.reference, cfg.scale_factor)?;
    let (_, flows) = forward(&lr, &reference, &ck.params, &cfg)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let levels = a.levels.clamp(1, flows.levels().len());
    for level in flows.levels().iter().take(levels) {
        let i = level.scale_index();
        // One colour scale for all levels, in full-resolution pixels.
        let px = (1usize << i) as f32;
        let max = a.max_flow.unwrap_or_else(|| level.max_magnitude() * px).max(1e-6);
        let img = flow_to_color(level, max / px)?;
        let path = a.out_dir.join(format!("flow_{i}.png"));
        save_png(&path, &img)?;
        let (u, v) = level.median_vector(0.5);
        println!(
            "scale {i}: median flow ({:.2}, {:.2}) px at this scale, ({:.2}, {:.2}) px at full resolution -> {}",
            u,
            v,
            u * (1 << i) as f32,
            v * (1 << i) as f32,
            path.display()
        );
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    let mut tables = Vec::new();
    for spec in &a.tables {
        let (method, path) = match spec.split_once('=') {
            Some((m, p)) => (m.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map_or("method".into(), |s| s.to_string_lossy().into_owned());
                (stem, p)
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        tables.push(parse_table_csv(&text, &method, &a.dataset_name)?);
    }
    let hash_src = match &a.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => a.tables.join(","),
    };
    let files = emit_report(&tables, &a.out, &config_hash(&hash_src))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
