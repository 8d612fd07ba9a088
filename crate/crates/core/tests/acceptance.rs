//! End-to-end acceptance run: every criterion prints one PASS/FAIL line.
//!
//! The whole protocol runs twice in separate directories; the second run
//! only feeds the determinism criterion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use canm::data::{misalign, synth_pair, MisalignSpec};
use canm::network::Variant;
use serde_json::Value;

const VERIFY_BUDGET: Duration = Duration::from_secs(5 * 60);
const OVERFIT_BUDGET: Duration = Duration::from_secs(15 * 60);

struct Run {
    dir: PathBuf,
    verify_time: Duration,
    overfit_time: Duration,
    exits: BTreeMap<String, i32>,
}

fn canm(args: &[&str]) -> i32 {
    let o = Command::new(env!("CARGO_BIN_EXE_canm")).args(args).output().expect("binary runs");
    if !o.status.success() {
        eprint!("{}", String::from_utf8_lossy(&o.stderr));
    }
    o.status.code().unwrap_or(-1)
}

fn run_protocol(dir: &Path) -> Run {
    let d = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let mut exits = BTreeMap::new();
    let t = Instant::now();
    exits.insert("verify".into(), canm(&["verify", "--report", &d("verify.json")]));
    let verify_time = t.elapsed();
    exits.insert("anchor".into(), canm(&["overfit", "--steps", "0", "--out", &d("anchor")]));
    let t = Instant::now();
    exits.insert("learn".into(), canm(&["overfit", "--preset", "desk", "--seed", "1", "--scale", "4", "--steps", "200", "--out", &d("learn")]));
    let overfit_time = t.elapsed();
    for v in std::iter::once(Variant::Default).chain(Variant::ABLATIONS) {
        let name = format!("ablate_{v}");
        exits.insert(name.clone(), canm(&["overfit", "--variant", v.name(), "--steps", "50", "--out", &d(&name)]));
    }
    exits.insert("misalign".into(), canm(&["overfit", "--misalign", "4,0,3", "--steps", "50", "--out", &d("misalign")]));
    Run {
        dir: dir.to_path_buf(),
        verify_time,
        overfit_time,
        exits,
    }
}

fn json(path: PathBuf) -> Option<Value> {
    serde_json::from_slice(&std::fs::read(path).ok()?).ok()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// All checks of the named suite.
fn checks<'a>(verify: &'a Value, suite: &str) -> Vec<&'a Value> {
    verify["suites"]
        .as_array()
        .into_iter()
        .flatten()
        .filter(|s| s["suite"] == suite)
        .flat_map(|s| s["checks"].as_array().into_iter().flatten())
        .collect()
}

/// Every check passed at a tolerance no looser than `tol`.
fn all_within(cs: &[&Value], tol: f64) -> bool {
    !cs.is_empty() && cs.iter().all(|c| c["passed"] == true && f(&c["tolerance"]) <= tol && f(&c["max_error"]) <= tol)
}

fn max_error(cs: &[&Value]) -> f64 {
    cs.iter().map(|c| f(&c["max_error"])).fold(0.0, f64::max)
}

fn distinct_seeds(cs: &[&Value]) -> usize {
    let mut s: Vec<u64> = cs.iter().filter_map(|c| c["seed"].as_u64()).collect();
    s.sort_unstable();
    s.dedup();
    s.len()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap_or_default();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

struct Verdict {
    n: usize,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn criterion_1(a: &Run, verify: &Value) -> (bool, String) {
    let grad = checks(verify, "grad");
    let blocks: Vec<&Value> = grad.iter().copied().filter(|c| c["name"] != "network_desk").collect();
    let net: Vec<&Value> = grad.iter().copied().filter(|c| c["name"] == "network_desk").collect();
    let required = [
        "matmul", "conv2d", "avg_pool", "pixel_shuffle", "wab", "cab", "ffb", "ctl", "adain", "nbfm_with_w",
    ];
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|r| !grad.iter().any(|c| c["name"].as_str().is_some_and(|n| n.starts_with(r))))
        .collect();
    let sampled = net.first().and_then(|c| c["checked"].as_u64()).unwrap_or(0);
    let ok = a.exits["verify"] == 0
        && missing.is_empty()
        && all_within(&blocks, 1e-6)
        && all_within(&net, 1e-5)
        && sampled >= 16
        && a.verify_time < VERIFY_BUDGET;
    (
        ok,
        format!(
            "{} block checks max rel {:.2e}, network max rel {:.2e} over {} coords, missing {:?}, {:.1}s",
            blocks.len(),
            max_error(&blocks),
            max_error(&net),
            sampled,
            missing,
            a.verify_time.as_secs_f64()
        ),
    )
}

fn criterion_2(verify: &Value) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in ["wab", "cab", "nbfm"] {
        let cs = checks(verify, s);
        ok &= all_within(&cs, 1e-10) && distinct_seeds(&cs) >= 5;
        parts.push(format!("{s} {:.1e} ({} seeds)", max_error(&cs), distinct_seeds(&cs)));
    }
    let g = checks(verify, "gfm");
    let eq: Vec<&Value> = g.iter().copied().filter(|c| c["name"].as_str().is_some_and(|n| n.contains("eq_covering"))).collect();
    ok &= all_within(&g, 1e-10) && all_within(&eq, 1e-12);
    parts.push(format!("gfm==nbfm {:.1e}", max_error(&eq)));
    (ok, parts.join(", "))
}

fn criterion_3(verify: &Value) -> (bool, String) {
    let fold = checks(verify, "fold");
    let inv = checks(verify, "invariants");
    let bitwise: Vec<&Value> = inv.iter().copied().filter(|c| c["name"] == "nbfm_locality_bitwise" || c["name"] == "ctl_zero_weights_identity").collect();
    let ok = all_within(&fold, 1e-12) && all_within(&inv, 1e-12) && bitwise.len() == 2 && all_within(&bitwise, 0.0);
    (ok, format!("roundtrips max {:.1e}, invariants max {:.1e}", max_error(&fold), max_error(&inv)))
}

fn criterion_4(verify: &Value) -> (bool, String) {
    let cs = checks(verify, "spectral");
    let ok = cs.len() >= 6 && all_within(&cs, 1e-9);
    (ok, format!("{} (s, n) cases, max {:.1e}", cs.len(), max_error(&cs)))
}

fn criterion_5(a: &Run) -> (bool, String) {
    let Some(r) = json(a.dir.join("anchor/report.json")) else {
        return (false, "no report".into());
    };
    let l0 = f(&r["initial_loss"]);
    let base = f(&r["baseline"]["l1"]);
    let ok = a.exits["anchor"] == 0 && (l0 - base).abs() <= 1e-12 && r["baseline"]["psnr"] == r["final"]["psnr"];
    (ok, format!("step-0 loss {l0:e} vs baseline l1 {base:e}, psnr {} vs {}", r["final"]["psnr"], r["baseline"]["psnr"]))
}

fn criterion_6(a: &Run) -> (bool, String) {
    let Some(r) = json(a.dir.join("learn/report.json")) else {
        return (false, "no report".into());
    };
    let ratio = f(&r["loss_ratio"]);
    let gain = f(&r["psnr_gain_db"]);
    let ok = a.exits["learn"] == 0 && ratio < 0.5 && gain >= 1.0 && a.overfit_time < OVERFIT_BUDGET;
    (
        ok,
        format!(
            "loss ratio {ratio:.3}, psnr {:.2} -> {:.2} dB (+{gain:.2}), {:.0}s",
            f(&r["baseline"]["psnr"]),
            f(&r["final"]["psnr"]),
            a.overfit_time.as_secs_f64()
        ),
    )
}

fn criterion_7(a: &Run) -> (bool, String) {
    let report = |v: Variant| json(a.dir.join(format!("ablate_{v}/report.json")));
    let ran = std::iter::once(Variant::Default)
        .chain(Variant::ABLATIONS)
        .filter(|v| a.exits[&format!("ablate_{v}")] == 0 && report(*v).is_some())
        .count();
    let (Some(def), Some(wo), Some(gfm)) = (report(Variant::Default), report(Variant::WoFm), report(Variant::Gfm)) else {
        return (false, format!("{ran}/7 variant runs produced reports"));
    };
    let n = |r: &Value, k: &str| r[k].as_u64().unwrap_or(0);
    let ok = ran == 7
        && n(&wo, "params") < n(&def, "params")
        && n(&gfm, "similarity_evaluations") > n(&def, "similarity_evaluations");
    (
        ok,
        format!(
            "{ran}/7 trained 50 steps, params wo_fm {} < default {}, similarity evaluations gfm {} > nbfm {}",
            n(&wo, "params"),
            n(&def, "params"),
            n(&gfm, "similarity_evaluations"),
            n(&def, "similarity_evaluations")
        ),
    )
}

fn criterion_8(a: &Run) -> (bool, String) {
    let report = json(a.dir.join("misalign/report.json"));
    let spec_ok = report.as_ref().is_some_and(|r| f(&r["misalign"]["tx"]) == 4.0 && f(&r["misalign"]["theta"]) == 3.0);
    let pair = synth_pair(1, 64, 64, 4).expect("phantom");
    let identity = misalign(&pair.reference, &MisalignSpec::default()).expect("zero spec") == pair.reference;
    let ok = a.exits["misalign"] == 0 && spec_ok && identity;
    (ok, format!("perturbed run exit {}, zero spec bitwise identity {identity}", a.exits["misalign"]))
}

fn criterion_9(verify: &Value) -> (bool, String) {
    let cs = checks(verify, "metrics");
    let find = |name: &str| cs.iter().copied().filter(|c| c["name"].as_str().is_some_and(|n| n.starts_with(name))).collect::<Vec<_>>();
    let uniform = find("psnr_uniform");
    let selfsim = find("ssim_self");
    let ok = all_within(&cs, 1e-10) && all_within(&selfsim, 1e-12) && !uniform.is_empty();
    (ok, format!("{} metric checks, max {:.1e}", cs.len(), max_error(&cs)))
}

fn criterion_10(a: &Run, b: &Run) -> (bool, String) {
    let (fa, fb) = (files(&a.dir), files(&b.dir));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let ok = !fa.is_empty() && differing.is_empty() && a.exits == b.exits;
    (ok, format!("{} files compared, {} differ {:?}", fa.len(), differing.len(), &differing[..differing.len().min(3)]))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let root = tempfile::tempdir().expect("temp dir");
    let a = run_protocol(&root.path().join("a"));
    let b = run_protocol(&root.path().join("b"));
    let verify = json(a.dir.join("verify.json")).unwrap_or(Value::Null);

    let results = [
        (1, "gradient suite", criterion_1(&a, &verify)),
        (2, "oracle suite", criterion_2(&verify)),
        (3, "structural invariants", criterion_3(&verify)),
        (4, "spectral consistency", criterion_4(&verify)),
        (5, "training-start anchor", criterion_5(&a)),
        (6, "desk-scale learning", criterion_6(&a)),
        (7, "ablation machinery", criterion_7(&a)),
        (8, "misalignment protocol", criterion_8(&a)),
        (9, "metric correctness", criterion_9(&verify)),
        (10, "determinism", criterion_10(&a, &b)),
    ];
    let verdicts: Vec<Verdict> = results
        .into_iter()
        .map(|(n, title, (passed, detail))| Verdict { n, title, passed, detail })
        .collect();
    for v in &verdicts {
        println!(
            "criterion {:>2} {:<22} {}  {}",
            v.n,
            v.title,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
