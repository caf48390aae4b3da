use std::path::Path;

use crossnet::checkpoint::Checkpoint;
use crossnet::flow::{FlowNetConfig, FlowNetVariant};
use crossnet::io::save_png;
use crossnet::model::{init_params, CrossNetConfig};
use crossnet::synthetic::{write_dataset, SceneSpec};
use crossnet::Image;
use crossnet_cli::{run_cli, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn tiny_model() -> CrossNetConfig {
    CrossNetConfig {
        scale_factor: 4,
        flow: FlowNetConfig {
            variant: FlowNetVariant::Plus,
            base_channels: 2,
        },
        ..CrossNetConfig::default()
    }
}

fn write_checkpoint(path: &Path) {
    let model = tiny_model();
    Checkpoint {
        iteration: 0,
        params: init_params(&model, 1),
        model,
        train: None,
        optimizer: None,
    }
    .save(path)
    .unwrap();
}

fn run(args: &[&str]) -> i32 {
    run_cli(std::iter::once("crossnet").chain(args.iter().copied()))
}

fn texture(h: usize, w: usize) -> Image {
    Image::from_fn(3, h, w, |c, y, x| 0.5 + 0.4 * ((x as f32 * 0.4 + c as f32).sin() * (y as f32 * 0.3).cos()))
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["sr", "--lr", "a.png"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn sr_rejects_size_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    write_checkpoint(&dir.path().join("m.ckpt"));
    save_png(p("a.png"), &texture(8, 8)).unwrap();
    save_png(p("b.png"), &texture(48, 48)).unwrap();
    let code = run(&["sr", "--scale", "8", "--lr", &p("a.png"), "--ref", &p("b.png"), "--checkpoint", &p("m.ckpt"), "--out", &p("o.png")]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!dir.path().join("o.png").exists());
}

#[test]
fn sr_and_flow_viz_write_images() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    write_checkpoint(&dir.path().join("m.ckpt"));
    save_png(p("a.png"), &texture(8, 16)).unwrap();
    save_png(p("b.png"), &texture(32, 64)).unwrap();
    let code = run(&[
        "sr", "--lr", &p("a.png"), "--ref", &p("b.png"), "--checkpoint", &p("m.ckpt"), "--window", "32", "--stride", "16", "--out", &p("o.png"),
    ]);
    assert_eq!(code, EXIT_OK);
    let out = crossnet::io::load_png(p("o.png")).unwrap();
    assert_eq!(out.size(), (32, 64));
    let code = run(&["flow-viz", "--lr", &p("a.png"), "--ref", &p("b.png"), "--checkpoint", &p("m.ckpt"), "--out-dir", &p("flows")]);
    assert_eq!(code, EXIT_OK);
    for i in 0..4 {
        assert!(dir.path().join(format!("flows/flow_{i}.png")).is_file());
    }
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    save_png(p("a.png"), &texture(8, 8)).unwrap();
    let code = run(&["sr", "--lr", &p("a.png"), "--ref", &p("a.png"), "--checkpoint", &p("none.ckpt"), "--out", &p("o.png")]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn eval_two_scenes_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let spec = SceneSpec {
        height: 32,
        width: 32,
        grid: 8,
        disparity: 1,
        seed: 2,
    };
    write_dataset(&dir.path().join("data"), &spec, &["t0"], &["s0", "s1"]).unwrap();
    write_checkpoint(&dir.path().join("m.ckpt"));
    let code = run(&["eval", "--checkpoint", &p("m.ckpt"), "--dataset", &p("data"), "--out", &p("out/eval.csv"), "--baseline"]);
    assert_eq!(code, EXIT_OK);
    let csv = std::fs::read_to_string(p("out/eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 14 + 7 + 1);
    assert!(lines[1].starts_with("s0,1_1,0_0,4,"));
    assert!(lines[22].starts_with("mean,all,0_0,4,"));
    assert!(dir.path().join("out/eval.svg").is_file());

    let code = run(&["report", "--tables", &format!("crossnet={}", p("out/eval.csv")), "--dataset-name", "synth", "--out", &p("rep")]);
    assert_eq!(code, EXIT_OK);
    assert!(dir.path().join("rep/synth_x4_crossnet.csv").is_file());
    assert!(dir.path().join("rep/synth_x4_psnr.svg").is_file());
}

#[test]
fn train_writes_log_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let spec = SceneSpec {
        height: 32,
        width: 32,
        grid: 8,
        disparity: 1,
        seed: 2,
    };
    write_dataset(&dir.path().join("data"), &spec, &["t0"], &["s0"]).unwrap();
    std::fs::write(
        p("cfg.txt"),
        "scale = 4\nflow_base_channels = 2\ncrop_size = 32\nbatch_size = 1\ntotal_iterations = 2\nlr_schedule = none\nlog_every = 1\ncheckpoint_every = 1\n",
    )
    .unwrap();
    let code = run(&["train", "--config", &p("cfg.txt"), "--dataset", &p("data"), "--out", &p("run")]);
    assert_eq!(code, EXIT_OK);
    let log = std::fs::read_to_string(p("run/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let ck = Checkpoint::load(&dir.path().join("run/final.ckpt")).unwrap();
    assert_eq!(ck.iteration, 2);
    assert!(dir.path().join("run/checkpoints/ckpt_00000001.bin").is_file());

    std::fs::write(p("bad.txt"), "scale = 5\n").unwrap();
    assert_eq!(run(&["train", "--config", &p("bad.txt"), "--dataset", &p("data")]), EXIT_USAGE);
}
