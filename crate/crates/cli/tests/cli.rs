use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::GenericImageView;
use num_complex::Complex32;
use phasegen::pipelines::{generate_phantom, Manifest, PhantomRecord, MANIFEST_FILE};
use phasegen::tensor_io::{self, Tensor};

fn phasegen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasegen"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PHASEGEN_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = phasegen(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    phasegen(args, cwd).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The run directory a command printed on stdout.
fn run_dir(stdout: &str) -> PathBuf {
    PathBuf::from(stdout.lines().last().unwrap().trim())
}

fn dataset(root: &Path, name: &str, count: usize, seed: u64) -> PathBuf {
    let dir = root.join(name);
    ok(
        &["phantom", "--out", s(&dir), "--count", &count.to_string(), "--size", "32", "--seed", &seed.to_string()],
        root,
    );
    dir
}

#[test]
fn phantom_dataset_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = dataset(tmp.path(), "a", 4, 11);
    let b = dataset(tmp.path(), "b", 4, 11);
    let manifest = Manifest::read(a.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.len(), 4);
    for e in &manifest.entries {
        assert_eq!(fs::read(a.join(&e.path)).unwrap(), fs::read(b.join(&e.path)).unwrap());
    }
    let first = PhantomRecord::read(a.join("phantom_00000.cxt")).unwrap();
    assert_eq!(first, generate_phantom(11, 32).unwrap());

    let empty = dataset(tmp.path(), "empty", 0, 1);
    assert_eq!(Manifest::read(empty.join(MANIFEST_FILE)).unwrap().len(), 0);
}

#[test]
fn phantom_refuses_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = dataset(tmp.path(), "d", 2, 0);
    let before = fs::read(dir.join("phantom_00000.cxt")).unwrap();
    assert_eq!(code(&["phantom", "--out", s(&dir), "--count", "2", "--seed", "9"], tmp.path()), 2);
    assert_eq!(fs::read(dir.join("phantom_00000.cxt")).unwrap(), before);
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    assert_eq!(code(&["phantom", "--out", "x", "--colour", "red"], p), 1);
    assert_eq!(code(&["phantom", "--out", "x", "--count", "many"], p), 1);
    assert_eq!(code(&["no-such-command"], p), 1);
    assert_eq!(code(&["metrics", "only-one"], p), 1);
    assert_eq!(code(&["train-phasegen", "--out", "runs", "--image-size", "31"], p), 1);
    assert_eq!(code(&["train-phasegen", "--out", "runs", "--image-size", "8"], p), 1);
    assert_eq!(code(&["recon", "--out", "runs", "--baseline", "magic"], p), 1);
    assert!(!p.join("runs").exists());
    assert_eq!(code(&["--help"], p), 0);
    assert_eq!(code(&["--version"], p), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_phasegen"))
        .args(["mask", "--out", "runs"])
        .current_dir(p)
        .env("PHASEGEN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn metrics_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = dataset(tmp.path(), "d", 2, 3);
    let (a, b) = (d.join("phantom_00000.cxt"), d.join("phantom_00001.cxt"));

    let out = ok(&["metrics", s(&a), s(&a), "--header"], tmp.path());
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "ssim,psnr,mse,nrmse,dsc,hd,circ_rmse");
    assert_eq!(lines[1], "100,inf,0,0,,,0");

    let out = ok(&["metrics", s(&a), s(&a), "--mask", s(&a)], tmp.path());
    assert_eq!(out.trim(), "100,inf,0,0,100,0,0");

    let out = ok(&["metrics", s(&a), s(&b), "--mask", s(&a), "--pred-mask", s(&b)], tmp.path());
    let cells: Vec<f64> = out.trim().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(cells.len(), 7);
    assert!(cells[0] < 100.0 && cells[4] < 100.0 && cells[5] > 0.0 && cells[6] > 0.0);

    assert_eq!(code(&["metrics", s(&a), s(&tmp.path().join("missing.cxt"))], tmp.path()), 2);
    let small = dataset(tmp.path(), "small", 1, 3);
    fs::rename(small.join("phantom_00000.cxt"), tmp.path().join("s.cxt")).unwrap();
    ok(&["phantom", "--out", s(&tmp.path().join("big")), "--count", "1", "--size", "40"], tmp.path());
    let big = tmp.path().join("big/phantom_00000.cxt");
    assert_eq!(code(&["metrics", s(&tmp.path().join("s.cxt")), s(&big)], tmp.path()), 2);
}

#[test]
fn naive_phase_keeps_magnitude() {
    let tmp = tempfile::tempdir().unwrap();
    let d = dataset(tmp.path(), "d", 3, 5);
    let run = run_dir(&ok(&["naive-phase", "--out", s(&tmp.path().join("runs")), "--input", s(&d), "--seed", "4"], tmp.path()));
    assert!(run.join("config.txt").exists());
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    for i in 0..3 {
        let rec = PhantomRecord::read(d.join(format!("phantom_{i:05}.cxt"))).unwrap();
        let z = tensor_io::read_tensor(run.join(format!("phantom_{i:05}.cxt"))).unwrap();
        for (m, v) in rec.magnitude.data().iter().zip(z.magnitude().data()) {
            assert!((m - v).abs() <= 1e-6 * (1.0 + m));
        }
    }
}

#[test]
fn train_then_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    let train = run_dir(&ok(
        &["train-phasegen", "--out", s(&runs), "--seed", "1", "--dataset-size", "8", "--max-steps", "2", "--timesteps", "10"],
        tmp.path(),
    ));
    let loss = fs::read_to_string(train.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert!(fs::read_to_string(train.join("config.txt")).unwrap().contains("timesteps = 10"));

    let d = dataset(tmp.path(), "d", 2, 8);
    let ckpt = train.join("checkpoint");
    let args = ["sample", "--out", s(&runs), "--checkpoint", s(&ckpt), "--input", s(&d), "--seed", "3"];
    let first = run_dir(&ok(&args, tmp.path()));
    let second = run_dir(&ok(&args, tmp.path()));
    assert_ne!(first, second);
    let rec = PhantomRecord::read(d.join("phantom_00001.cxt")).unwrap();
    let z = tensor_io::read_tensor(first.join("phantom_00001.cxt")).unwrap();
    for (m, v) in rec.magnitude.data().iter().zip(z.magnitude().data()) {
        assert!((m - v).abs() <= 1e-6 * (1.0 + m));
    }
    assert_eq!(
        fs::read(first.join("phantom_00001.cxt")).unwrap(),
        fs::read(second.join("phantom_00001.cxt")).unwrap()
    );
}

#[test]
fn recon_zerofill_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let run = run_dir(&ok(&["recon", "--out", "runs", "--baseline", "zerofill", "--test-count", "3"], tmp.path()));
    assert!(run.starts_with("runs"));
    let run = tmp.path().join(run);
    assert!(!run.join("checkpoint").exists());
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "id,method,ssim,psnr,mse,nrmse,dsc,hd,circ_rmse");
    assert_eq!(lines.len(), 4);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells[1], "zerofill");
        let ssim: f64 = cells[2].parse().unwrap();
        assert!(ssim > 0.0 && ssim < 100.0);
    }
}

#[test]
fn masks_are_written_with_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let run = run_dir(&ok(
        &["mask", "--out", s(&tmp.path().join("runs")), "--width", "64", "--count", "2", "--seed", "5"],
        tmp.path(),
    ));
    for i in 0..2 {
        let m = phasegen::kspace::read_mask(run.join(format!("mask_{i:03}.cxt"))).unwrap();
        assert_eq!(m.width(), 64);
        assert_eq!(m.center_count(), 5);
    }
}

fn write_image(path: &Path, h: usize, w: usize, f: impl Fn(usize, usize) -> Complex32) {
    let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
    tensor_io::write_raw(path, &Tensor { dims: vec![h, w], data }).unwrap();
}

#[test]
fn export_png_shapes_and_colors() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    write_image(&p.join("const.cxt"), 6, 9, |_, _| Complex32::new(2.0, 0.0));
    ok(&["export-png", "const.cxt", "--kind", "magnitude", "--out", "c.png"], p);
    let img = image::open(p.join("c.png")).unwrap();
    assert_eq!(img.dimensions(), (9, 6));
    assert!(img.to_luma8().pixels().all(|px| px.0[0] == 128));

    // column 0 at phase pi, column 1 just above -pi
    write_image(&p.join("edge.cxt"), 2, 2, |_, c| {
        let phi = if c == 0 { std::f32::consts::PI } else { -std::f32::consts::PI + 1e-6 };
        Complex32::from_polar(1.0, phi)
    });
    ok(&["export-png", "edge.cxt", "--kind", "phase", "--out", "e.png"], p);
    let rgb = image::open(p.join("e.png")).unwrap().to_rgb8();
    assert_eq!(rgb.get_pixel(0, 0), rgb.get_pixel(1, 0));

    assert_eq!(code(&["export-png", "const.cxt", "--kind", "magnitude", "--out", "c.png"], p), 2);
}

#[test]
fn unwrap_writes_real_tensor() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    let (h, w) = (16, 16);
    let truth = |r: usize, c: usize| 0.9 * c as f32 + 0.2 * r as f32;
    write_image(&p.join("ramp.cxt"), h, w, |r, c| Complex32::from_polar(1.0, truth(r, c)));
    ok(&["unwrap", "ramp.cxt", "--out", "u.cxt"], p);
    let t = tensor_io::read_raw(p.join("u.cxt")).unwrap();
    assert_eq!(t.dims, vec![h, w]);
    assert!(t.data.iter().all(|z| z.im == 0.0));
    let offset = t.data[0].re - truth(0, 0);
    for (i, z) in t.data.iter().enumerate() {
        assert!((z.re - truth(i / w, i % w) - offset).abs() < 1e-3, "pixel {i}");
    }
}
