use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cips3d::config::RunConfig;
use cips3d::gan::Stage;
use cips3d::image::read_ppm;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cips3d"));
    c.env("CIPS3D_THREADS", "1");
    c
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(steps: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.generator.nerf.dim_z = 8;
    c.generator.nerf.dim_w = 8;
    c.generator.nerf.hidden = 8;
    c.generator.nerf.dim_v = 8;
    c.generator.inr.dim_z = 8;
    c.generator.inr.dim_w = 8;
    c.generator.inr.width = 8;
    c.generator.n_samples = 4;
    c.train.schedule = vec![Stage {
        start_step: 0,
        resolution: 4,
        n_r: Some(6),
    }];
    c.train.batch_size = 2;
    c.train.discriminator.base_channels = 4;
    c.train.aux_discriminator.base_channels = 2;
    c.steps = steps;
    c.checkpoint_every = 25;
    c.sample_every = 25;
    c.sample_count = 2;
    c
}

/// Trains a tiny model in `dir` and returns (config path, generator checkpoint).
fn train_tiny(dir: &Path, steps: u64, name: &str) -> (PathBuf, PathBuf) {
    let cfg_path = dir.join(format!("{name}.json"));
    fs::write(&cfg_path, tiny_config(steps).to_json()).unwrap();
    let out = dir.join(name);
    run_ok(&["train", s(&cfg_path), "--out", s(&out)]);
    (cfg_path, out.join("checkpoints/generator.ckpt"))
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = train_tiny(dir.path(), 50, "a");
    let (_, b) = train_tiny(dir.path(), 50, "b");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a/losses.csv")).unwrap(),
        fs::read(dir.path().join("b/losses.csv")).unwrap()
    );
    assert!(dir.path().join("a/checkpoints/generator_step000025.ckpt").exists());
    assert!(dir.path().join("a/samples/step000050_nerf.ppm").exists());
}

#[test]
fn too_many_rays_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(5);
    cfg.train.schedule[0].n_r = Some(17);
    let path = dir.path().join("bad.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let out = dir.path().join("run");
    let o = bin().args(["train", s(&path), "--out", s(&out)]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("17"));
    assert!(!out.join("losses.csv").exists());
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"steps": 3, "stepz": 4}"#).unwrap();
    let o = bin().args(["train", s(&path)]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepz"));
}

#[test]
fn diverging_run_exits_nonzero_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(30);
    cfg.train.lr_d = 1e30;
    cfg.train.lr_g = 1e30;
    let path = dir.path().join("nan.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let out = dir.path().join("run");
    let o = bin().args(["train", s(&path), "--out", s(&out)]).output().unwrap();
    assert!(!o.status.success());
    assert!(out.join("nan_dump.txt").exists());
}

#[test]
fn render_is_reproducible_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = train_tiny(dir.path(), 2, "m");
    let a = dir.path().join("a.ppm");
    let b = dir.path().join("b.ppm");
    for out in [&a, &b] {
        run_ok(&[
            "render", s(&ckpt), "--config", s(&cfg), "--seed-zs", "3", "--seed-za", "4",
            "--pitch", "1.5", "--yaw", "1.7", "--size", "16", "--out", s(out),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let img = read_ppm(&a).unwrap();
    assert_eq!((img.width, img.height), (16, 16));
    let aux = read_ppm(&dir.path().join("a_nerf.ppm")).unwrap();
    assert_eq!((aux.width, aux.height), (16, 16));
    assert_eq!(fs::read(dir.path().join("a_nerf.ppm")).unwrap(), fs::read(dir.path().join("b_nerf.ppm")).unwrap());
}

#[test]
fn render_refuses_bad_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = train_tiny(dir.path(), 1, "m");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[0] ^= 0xff;
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, &bytes).unwrap();
    let out = dir.path().join("x.ppm");
    let o = bin()
        .args(["render", s(&bad), "--config", s(&cfg), "--size", "4", "--out", s(&out)])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(!out.exists());

    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[7] = 9; // version
    fs::write(&bad, &bytes).unwrap();
    let o = bin()
        .args(["render", s(&bad), "--config", s(&cfg), "--size", "4", "--out", s(&out)])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));

    // architecture mismatch: default config against the tiny checkpoint
    let o = bin().args(["render", s(&ckpt), "--size", "4", "--out", s(&out)]).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn yaw_sweep_writes_ordered_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = train_tiny(dir.path(), 1, "m");
    let frames = dir.path().join("frames");
    run_ok(&[
        "sweep-yaw", s(&ckpt), "--config", s(&cfg), "--size", "4", "--frames", "5",
        "--yaw-min", "1.0", "--yaw-max", "2.0", "--out", s(&frames),
    ]);
    let mut names: Vec<String> = fs::read_dir(&frames)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.contains("_nerf"))
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["frame_0000.ppm", "frame_0001.ppm", "frame_0002.ppm", "frame_0003.ppm", "frame_0004.ppm"]
    );
    assert_ne!(
        fs::read(frames.join("frame_0000.ppm")).unwrap(),
        fs::read(frames.join("frame_0004.ppm")).unwrap()
    );
}

#[test]
fn bench_reports_diff_for_degenerate_dim() {
    let o = run_ok(&["bench-modfc", "--batch", "2", "--seq", "3", "--dim", "1", "--iters", "2", "--warmup", "0"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("max abs diff"), "{text}");
    assert!(text.contains("speedup"), "{text}");
    let o = bin().args(["bench-modfc", "--dim", "0"]).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn analyze_posenc_default_triple() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let o = run_ok(&["analyze-posenc", "--l-max", "10", "--out", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "L,d_ab,d_ac");
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[1], "0,0.174311485,0.684040287");
    assert!(String::from_utf8_lossy(&o.stdout).contains("crossover L*="));
}

#[test]
fn analyze_posenc_custom_points() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    run_ok(&["analyze-posenc", "--l-max", "2", "--out", s(&csv), "--a", "0,0,0", "--b", "3,4,0", "--c", "-1,0,0"]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "0,5.00000000,1.00000000");
    let o = bin()
        .args(["analyze-posenc", "--out", s(&csv), "--a", "1,2"])
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn surgery_commands() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg_path, base) = train_tiny(dir.path(), 1, "base");
    // fine-tune from the base with a frozen shape branch
    let mut ft = tiny_config(3);
    ft.init_checkpoint = Some(base.clone());
    ft.freeze_nerf = true;
    let ft_path = dir.path().join("ft.json");
    fs::write(&ft_path, ft.to_json()).unwrap();
    let ft_out = dir.path().join("ft");
    run_ok(&["train", s(&ft_path), "--out", s(&ft_out)]);
    let transferred = ft_out.join("checkpoints/generator.ckpt");

    let i0 = dir.path().join("i0.ckpt");
    let i1 = dir.path().join("i1.ckpt");
    run_ok(&["interp-models", "--base", s(&base), "--transferred", s(&transferred), "--alpha", "0", "--out", s(&i0)]);
    run_ok(&["interp-models", "--base", s(&base), "--transferred", s(&transferred), "--alpha", "1", "--out", s(&i1)]);
    assert_eq!(fs::read(&i0).unwrap(), fs::read(&base).unwrap());
    assert_eq!(fs::read(&i1).unwrap(), fs::read(&transferred).unwrap());

    let w0 = dir.path().join("w0.ckpt");
    run_ok(&["swap-models", "--base", s(&base), "--transferred", s(&transferred), "--from-block", "0", "--out", s(&w0)]);
    let w9 = dir.path().join("w9.ckpt");
    run_ok(&["swap-models", "--base", s(&base), "--transferred", s(&transferred), "--from-block", "9", "--out", s(&w9)]);
    assert_eq!(fs::read(&w9).unwrap(), fs::read(&base).unwrap());
    let o = bin()
        .args(["swap-models", "--base", s(&base), "--transferred", s(&transferred), "--from-block", "10", "--out", s(&w0)])
        .output()
        .unwrap();
    assert!(!o.status.success());

    // an unrelated model has a different shape branch
    let (_, other) = {
        let mut c = tiny_config(1);
        c.train.seed = 7;
        let p = dir.path().join("other.json");
        fs::write(&p, c.to_json()).unwrap();
        let out = dir.path().join("other");
        run_ok(&["train", s(&p), "--out", s(&out)]);
        (p, out.join("checkpoints/generator.ckpt"))
    };
    let o = bin()
        .args(["interp-models", "--base", s(&base), "--transferred", s(&other), "--alpha", "0.5", "--out", s(&w0)])
        .output()
        .unwrap();
    assert!(!o.status.success());

    let o = run_ok(&["probe-symmetry", s(&i1), "--config", s(&cfg_path), "--size", "6"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("mirror score"));
}

#[test]
fn thread_env_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_cips3d"))
        .env("CIPS3D_THREADS", "zero")
        .args(["bench-modfc", "--batch", "1", "--seq", "1", "--dim", "1", "--iters", "1"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("CIPS3D_THREADS"));
}

#[test]
fn coordinate_fuzz_seeds() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/coords");
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().into_string().unwrap();
        let text = fs::read_to_string(entry.path()).unwrap();
        let parsed = cips3d_cli::parse_coords(&text);
        let rejected = ["two", "nan", "empty"].contains(&name.as_str());
        assert_eq!(parsed.is_err(), rejected, "{name}: {parsed:?}");
    }
}
