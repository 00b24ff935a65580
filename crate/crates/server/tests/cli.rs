use std::path::{Path, PathBuf};
use std::process::Command;

use dccf::io::{encode_mask_png, load_image, load_stack, save_image};
use dccf::optimizer::{fit, FitConfig};
use dccf::scenes::{ellipse_mask, photo};
use dccf::{load_mask, Error, LossMode};
use dccf_server::cli::{self, Failure, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    gt: PathBuf,
    mask: PathBuf,
}

fn fixture(size: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let gt = root.join("gt.png");
    let mask = root.join("mask.png");
    save_image(&photo(size, size, 4), &gt).unwrap();
    let c = size as f64 / 2.0;
    std::fs::write(&mask, encode_mask_png(&ellipse_mask(size, size, (c, c), (c * 0.6, c * 0.5))).unwrap()).unwrap();
    Fixture { _dir: dir, root, gt, mask }
}

#[test]
fn synth_fit_apply_pipeline() {
    let f = fixture(48);
    let composite = f.root.join("composite.ppm");
    let code = cli::run(["dccf", "synth", s(&f.gt), s(&f.mask), "--theta", "-30", "--sigma", "0.4", "--gamma", "1.4", "--out", s(&composite)]);
    assert_eq!(code, EXIT_OK);
    assert!(composite.exists());

    let stack = f.root.join("stack.dccf");
    let report = f.root.join("report.json");
    let code = cli::run([
        "dccf", "fit", s(&composite), s(&f.gt), s(&f.mask), "--grid", "8", "--mode", "standard", "--iters", "40", "--seed", "3",
        "--out", s(&stack), "--report", s(&report),
    ]);
    assert_eq!(code, EXIT_OK);

    // the report matches an in-process fit with the same settings
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let cfg = FitConfig { grid_w: 8, grid_h: 8, mode: LossMode::Standard, max_iters: 40, seed: 3, ..FitConfig::default() };
    let (fitted, rep) = fit(&load_image(&composite).unwrap(), &load_image(&f.gt).unwrap(), &load_mask(&f.mask, false).unwrap(), &cfg).unwrap();
    let history: Vec<f64> = json["loss_history"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(history, rep.loss_history);
    assert_eq!(json["iterations"].as_u64().unwrap() as usize, rep.iterations_run);
    assert_eq!(json["final_mse"].as_f64().unwrap(), rep.final_mse);
    assert_eq!(json["final_psnr"].as_f64().unwrap(), rep.final_psnr);
    assert!(json["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(load_stack(&stack).unwrap(), dccf::io::decode_stack(&dccf::io::encode_stack(&fitted)).unwrap());

    // apply is deterministic across runs
    let a = f.root.join("a.png");
    let b = f.root.join("b.png");
    for out in [&a, &b] {
        assert_eq!(cli::run(["dccf", "apply", s(&composite), s(&stack), "--stage", "4", "--out", s(out)]), EXIT_OK);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    for stage in ["1", "2", "3"] {
        let out = f.root.join(format!("stage{stage}.png"));
        assert_eq!(cli::run(["dccf", "apply", s(&composite), s(&stack), "--stage", stage, "--out", s(&out)]), EXIT_OK);
    }
}

#[test]
fn decompose_writes_planes() {
    let f = fixture(24);
    for mode in ["standard", "smooth"] {
        let out = f.root.join(mode);
        assert_eq!(cli::run(["dccf", "decompose", s(&f.gt), "--mode", mode, "--out-dir", s(&out)]), EXIT_OK);
        for name in ["value.png", "saturation.png", "hue.png"] {
            let img = load_image(out.join(name)).unwrap();
            assert_eq!(img.dims(), (24, 24));
        }
    }
    // the standard value plane is the channel maximum
    let v = load_image(f.root.join("standard/value.png")).unwrap();
    let gt = load_image(&f.gt).unwrap();
    for (p, q) in v.pixels().zip(gt.pixels()) {
        assert!((p[0] - q[0].max(q[1]).max(q[2])).abs() <= 0.5 / 255.0 + 1e-12);
    }
}

#[test]
fn usage_errors_exit_2() {
    let f = fixture(16);
    let out = f.root.join("o.png");
    assert_eq!(cli::run(["dccf"]), EXIT_USAGE);
    assert_eq!(cli::run(["dccf", "frobnicate"]), EXIT_USAGE);
    assert_eq!(cli::run(["dccf", "apply", s(&f.gt), "x.dccf", "--stage", "5", "--out", s(&out)]), EXIT_USAGE);
    assert_eq!(cli::run(["dccf", "synth", s(&f.gt), s(&f.mask), "--gamma", "0", "--out", s(&out)]), EXIT_USAGE);
    assert_eq!(cli::run(["dccf", "fit", s(&f.gt), s(&f.gt), s(&f.mask), "--mode", "fancy", "--out", s(&out)]), EXIT_USAGE);

    let stack = f.root.join("id.dccf");
    dccf::io::save_stack(&dccf::identity_stack(4, 4).unwrap(), &stack).unwrap();
    assert_eq!(cli::run(["dccf", "adjust", s(&f.gt), s(&stack), "--hue-theta", "90", "--hue-alpha", "2", "--out", s(&out)]), EXIT_USAGE);
    let bad_curve = f.root.join("curve.json");
    std::fs::write(&bad_curve, "{\"v_min\": 0, \"phis\": [1, 0]}").unwrap();
    assert_eq!(cli::run(["dccf", "adjust", s(&f.gt), s(&stack), "--val-curve", s(&bad_curve), "--out", s(&out)]), EXIT_USAGE);

    // mask of a different size
    let small_mask = f.root.join("small.png");
    std::fs::write(&small_mask, encode_mask_png(&dccf::Mask::full(8, 8)).unwrap()).unwrap();
    assert_eq!(cli::run(["dccf", "synth", s(&f.gt), s(&small_mask), "--out", s(&out)]), EXIT_USAGE);
    assert!(!out.exists());
    assert_eq!(cli::run(["dccf", "--help"]), EXIT_OK);
}

#[test]
fn io_errors_exit_3() {
    let f = fixture(16);
    let out = f.root.join("o.png");
    let missing = f.root.join("missing.png");
    assert_eq!(cli::run(["dccf", "decompose", s(&missing), "--out-dir", s(&f.root)]), EXIT_IO);
    let junk = f.root.join("junk.dccf");
    std::fs::write(&junk, b"JUNKJUNKJUNK").unwrap();
    assert_eq!(cli::run(["dccf", "apply", s(&f.gt), s(&junk), "--out", s(&out)]), EXIT_IO);
    let truncated = f.root.join("t.ppm");
    std::fs::write(&truncated, b"P6 4 4 255\n\x00\x01").unwrap();
    assert_eq!(cli::run(["dccf", "decompose", s(&truncated), "--out-dir", s(&f.root)]), EXIT_IO);
    let stack = f.root.join("id.dccf");
    dccf::io::save_stack(&dccf::identity_stack(4, 4).unwrap(), &stack).unwrap();
    assert_eq!(cli::run(["dccf", "apply", s(&f.gt), s(&stack), "--out", s(&f.root.join("o.jpg"))]), EXIT_IO);
}

#[test]
fn numerical_failures_map_to_4() {
    let f: Failure = Error::NonFinite { iteration: 3, channel: "hue[0]".into() }.into();
    assert_eq!(f.code, EXIT_NUMERICAL);
    assert!(f.message.contains("hue[0]"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dccf");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["--version"]), EXIT_OK);
    assert_eq!(status(&[]), EXIT_USAGE);
    assert_eq!(status(&["decompose", "/nonexistent/x.png", "--out-dir", "/tmp"]), EXIT_IO);
}
