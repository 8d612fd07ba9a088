use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn canm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_canm")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let pair = dir.join("pair");
    let w = dir.join("w");
    assert_eq!(code(&canm(&["synth", "--seed", "1", "--out", p(&pair)])), 0);
    assert_eq!(code(&canm(&["init", "--preset", "desk", "--seed", "1", "--share-branches", "--out", p(&w)])), 0);
    (pair, w)
}

#[test]
fn every_subcommand_documents_its_flags() {
    let cases: &[(&str, &[&str])] = &[
        ("degrade", &["--in", "--scale", "--out"]),
        ("forward", &["--config", "--preset", "--weights", "--ref", "--lr", "--out", "--target"]),
        ("verify", &["--suite", "--tol", "--report"]),
        ("overfit", &["--variant", "--seed", "--steps", "--scale", "--lr", "--misalign", "--save-weights", "--out"]),
        ("matchviz", &["--weights", "--ref", "--lr", "--level", "--skip-adain", "--out"]),
        ("init", &["--variant", "--seed", "--share-branches", "--out"]),
        ("synth", &["--seed", "--size", "--scale", "--out"]),
    ];
    for (cmd, flags) in cases {
        let o = canm(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd}");
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert_eq!(code(&canm(&["--help"])), 0);
    assert_eq!(code(&canm(&["bogus"])), 2);
    assert_eq!(code(&canm(&[])), 2);
}

#[test]
fn degrade_validates_and_writes_nothing_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (pair, _) = fixture(dir.path());
    let out = dir.path().join("d");
    let o = canm(&["degrade", "--in", p(&pair.join("hr.png")), "--scale", "4", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let meta = json(out.join("meta.json"));
    assert_eq!(meta["lr_size"], serde_json::json!([16, 16]));
    assert_eq!(meta["bit_depth"], 16);
    // hr.png is quantized, so the re-degraded image only agrees to quantization level
    let (mine, _) = canm::data::read_image(&out.join("lr_interp.png")).unwrap();
    let (theirs, _) = canm::data::read_image(&pair.join("lr_interp.png")).unwrap();
    assert!(mine.max_abs_diff(&theirs) < 1e-4);

    let bad = dir.path().join("bad");
    assert_eq!(code(&canm(&["degrade", "--in", p(&pair.join("hr.png")), "--scale", "5", "--out", p(&bad)])), 2);
    assert_eq!(code(&canm(&["degrade", "--in", p(&dir.path().join("missing.png")), "--scale", "2", "--out", p(&bad)])), 2);
    let odd = dir.path().join("odd.png");
    canm::data::write_image(&canm::Tensor::full(&[20, 20], 0.5), &odd, canm::data::BitDepth::Eight).unwrap();
    assert_eq!(code(&canm(&["degrade", "--in", p(&odd), "--scale", "4", "--out", p(&bad)])), 2);
    assert!(!bad.exists());
}

#[test]
fn forward_is_identity_at_init_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (pair, w) = fixture(dir.path());
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let args = |out: &Path| {
        vec![
            "forward".to_string(),
            "--weights".into(),
            p(&w).into(),
            "--ref".into(),
            p(&pair.join("ref.png")).into(),
            "--lr".into(),
            p(&pair.join("lr_interp.png")).into(),
            "--target".into(),
            p(&pair.join("hr.png")).into(),
            "--out".into(),
            p(out).into(),
        ]
    };
    let run = |out: &Path| {
        let v = args(out);
        canm(&v.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let o = run(&a);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("output"));
    assert_eq!(code(&run(&b)), 0);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(bytes, std::fs::read(pair.join("lr_interp.png")).unwrap());

    // a 64x64 network refuses a 32x32 image
    let small = dir.path().join("small.png");
    canm::data::write_image(&canm::Tensor::full(&[32, 32], 0.5), &small, canm::data::BitDepth::Eight).unwrap();
    let o = canm(&["forward", "--weights", p(&w), "--ref", p(&small), "--lr", p(&small), "--out", p(&a)]);
    assert_eq!(code(&o), 2);
    // config hash mismatch
    let o = canm(&["forward", "--preset", "micro", "--weights", p(&w), "--ref", p(&small), "--lr", p(&small), "--out", p(&a)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    assert_eq!(code(&canm(&["verify", "--suite", "oracle", "--report", p(&report)])), 0);
    assert_eq!(json(report)["passed"], true);
    let o = canm(&["verify", "--suite", "grad", "--inject-fault", "nbfm-w"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nbfm_with_w"));
    assert_eq!(code(&canm(&["verify", "--suite", "nope"])), 2);
    assert_eq!(code(&canm(&["verify", "--tol", "-1"])), 2);
}

#[test]
fn overfit_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero");
    assert_eq!(code(&canm(&["overfit", "--steps", "0", "--out", p(&zero)])), 0);
    let r = json(zero.join("report.json"));
    assert_eq!(r["baseline"]["psnr"], r["final"]["psnr"]);
    assert_eq!(r["initial_loss"], r["baseline"]["l1"]);
    for f in ["loss.csv", "report.txt", "ref.png", "hr.png", "before.png", "after.png"] {
        assert!(zero.join(f).exists(), "{f}");
    }

    let wo = dir.path().join("wo");
    assert_eq!(code(&canm(&["overfit", "--variant", "wo_fm", "--steps", "1", "--save-weights", "--out", p(&wo)])), 0);
    assert!(json(wo.join("report.json"))["params"].as_u64().unwrap() < r["params"].as_u64().unwrap());
    assert!(wo.join("weights/manifest.json").exists());

    let mis = dir.path().join("mis");
    assert_eq!(code(&canm(&["overfit", "--steps", "1", "--misalign", "-4,3,-3", "--out", p(&mis)])), 0);
    assert_eq!(json(mis.join("report.json"))["misalign"]["theta"], -3.0);
    let bad = dir.path().join("bad");
    assert_eq!(code(&canm(&["overfit", "--misalign", "5,0,0", "--out", p(&bad)])), 2);
    assert_eq!(code(&canm(&["overfit", "--variant", "wo_everything", "--out", p(&bad)])), 2);
    assert!(!bad.exists());
}

#[test]
fn gfm_and_covering_nbfm_train_identically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |variant: &str| {
        let out = dir.path().join(variant);
        let o = canm(&["overfit", "--preset", "micro", "--variant", variant, "--steps", "3", "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read_to_string(out.join("loss.csv")).unwrap(), std::fs::read(out.join("after.png")).unwrap())
    };
    assert_eq!(run("default"), run("gfm"));
}

#[test]
fn matchviz_on_identical_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (pair, w) = fixture(dir.path());
    let r = pair.join("ref.png");
    for (level, grid, offsets) in [(1, 32, 9), (2, 16, 9), (3, 8, 25)] {
        let out = dir.path().join(format!("mv{level}"));
        let l = level.to_string();
        let args = ["matchviz", "--weights", p(&w), "--ref", p(&r), "--lr", p(&r), "--level", &l, "--skip-adain", "--out", p(&out)];
        assert_eq!(code(&canm(&args)), 0);
        let meta = json(out.join("meta.json"));
        assert_eq!(meta["offsets"], offsets);
        assert_eq!(meta["grid"], serde_json::json!([grid, grid]));
        assert!(meta["center_fraction"].as_f64().unwrap() > 0.9, "level {level}: {meta}");
        let (img, _) = canm::data::read_image(&out.join("argmax.png")).unwrap();
        assert_eq!(img.shape(), [grid, grid]);
        assert!(canm::tensor::read_tensor(&out.join("attention.canm")).is_ok());
    }
    let bad = dir.path().join("mv4");
    assert_eq!(code(&canm(&["matchviz", "--weights", p(&w), "--ref", p(&r), "--lr", p(&r), "--level", "4", "--out", p(&bad)])), 2);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_canm"))
            .args(["synth", "--out", p(&out)])
            .env("CANM_THREADS", v)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("0")), 2);
    assert_eq!(code(&run("many")), 2);
    assert_eq!(code(&run("1")), 0);
}

#[test]
fn synth_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&canm(&["synth", "--seed", "3", "--scale", "2", "--out", p(d)])), 0);
    }
    for f in ["ref.png", "hr.png", "lr_small.png", "lr_interp.png", "meta.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
