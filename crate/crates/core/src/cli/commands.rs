use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{
    Command, ConfigArgs, DegradeArgs, ForwardArgs, InitArgs, MatchvizArgs, OverfitArgs, SynthArgs, VerifyArgs, EXIT_FAILED,
    EXIT_OK,
};
use crate::autodiff::Var;
use crate::data::image_io::encode_png;
use crate::data::{kspace_degrade, misalign, read_image, synth_pair, BitDepth, ImagePair, MisalignSpec};
use crate::error::{CanmError, Result};
use crate::fsutil::OutputSet;
use crate::metrics::report::ser_f64;
use crate::metrics::{ImageMetrics, MetricReport};
use crate::network::{Network, NetworkConfig, Variant};
use crate::tensor::{write_tensor_to, DType, Tensor};
use crate::train::overfit::HARNESS_LR;
use crate::train::{overfit, OverfitOptions};
use crate::verify::suites::{self, Fault, Suite, VerifyOptions};

pub fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Degrade(a) => degrade(&a),
        Command::Forward(a) => forward(&a),
        Command::Verify(a) => verify(&a),
        Command::Overfit(a) => overfit_cmd(&a),
        Command::Matchviz(a) => matchviz(&a),
        Command::Init(a) => init(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn bits(d: BitDepth) -> u8 {
    match d {
        BitDepth::Eight => 8,
        BitDepth::Sixteen => 16,
    }
}

fn resolve_config(a: &ConfigArgs) -> Result<Option<NetworkConfig>> {
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| CanmError::io(format!("reading {}", path.display()), e))?;
        return NetworkConfig::from_json(&text).map(Some);
    }
    a.preset.as_deref().map(NetworkConfig::preset).transpose()
}

/// Loads a checkpoint, checking it against an explicit config when one is given.
fn load_network(cfg: &ConfigArgs, weights: &Path) -> Result<Network> {
    match resolve_config(cfg)? {
        Some(c) => {
            let mut net = Network::build(&c, 0)?;
            net.load_weights(weights)?;
            Ok(net)
        }
        None => Network::open(weights),
    }
}

fn read_input(path: &Path, flag: &str, cfg: &NetworkConfig) -> Result<(Tensor, BitDepth)> {
    let (img, depth) = read_image(path)?;
    let [h, w] = cfg.input_size;
    if img.shape() != [h, w] {
        return Err(CanmError::shape(format!(
            "{flag} image {} is {}x{}, the network expects {h}x{w}",
            path.display(),
            img.shape()[0],
            img.shape()[1]
        )));
    }
    Ok((img, depth))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Serialize)]
struct DegradeMeta {
    scale: usize,
    input_size: [usize; 2],
    lr_size: [usize; 2],
    bit_depth: u8,
    max_imag: f64,
}

fn degrade(a: &DegradeArgs) -> Result<u8> {
    let s = a.scale as usize;
    let (img, depth) = read_image(&a.input)?;
    let d = kspace_degrade(&img, s)?;
    let meta = DegradeMeta {
        scale: s,
        input_size: [img.shape()[0], img.shape()[1]],
        lr_size: [d.lr_small.shape()[0], d.lr_small.shape()[1]],
        bit_depth: bits(depth),
        max_imag: d.max_imag,
    };
    let mut out = OutputSet::new();
    out.add("lr_small.png", encode_png(&d.lr_small, depth)?);
    out.add("lr_interp.png", encode_png(&d.lr_interp, depth)?);
    out.add("meta.json", to_json(&meta)?);
    out.commit(&a.out)?;
    println!(
        "wrote {}x{} lr_small and {}x{} lr_interp to {}",
        meta.lr_size[0],
        meta.lr_size[1],
        meta.input_size[0],
        meta.input_size[1],
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn batch(img: &Tensor) -> Var {
    Var::constant(ImagePair::batch(img))
}

fn forward(a: &ForwardArgs) -> Result<u8> {
    let net = load_network(&a.config, &a.weights)?;
    let (reference, _) = read_input(&a.reference, "--ref", &net.config)?;
    let (lr, depth) = read_input(&a.lr, "--lr", &net.config)?;
    let target = a.target.as_deref().map(|p| read_input(p, "--target", &net.config)).transpose()?;
    let y = net.forward(&ImagePair::batch(&reference), &ImagePair::batch(&lr))?;
    let [h, w] = net.config.input_size;
    let sr = y.reshape(&[h, w])?.map(|v| v.clamp(0.0, 1.0));
    let png = encode_png(&sr, depth)?;
    crate::fsutil::write_atomic(&a.out, &png)?;
    if let Some((t, _)) = target {
        let report = MetricReport::new(vec![
            ImageMetrics::measure("lr_interp", &lr, &t)?,
            ImageMetrics::measure("output", &sr, &t)?,
        ]);
        print!("{}", report.to_text());
    }
    Ok(EXIT_OK)
}

fn verify(a: &VerifyArgs) -> Result<u8> {
    let suite = Suite::parse(&a.suite)?;
    if let Some(t) = a.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(CanmError::usage(format!("--tol must be positive, got {t}")));
        }
    }
    let opts = VerifyOptions {
        tolerance: a.tol,
        fault: a.inject_fault.as_deref().map(Fault::parse).transpose()?,
    };
    let report = suites::run(suite, &opts)?;
    print!("{}", report.to_text());
    if let Some(path) = &a.report {
        crate::fsutil::write_atomic(path, &to_json(&report)?)?;
    }
    for (suite, c) in report.failures() {
        eprintln!(
            "FAILED {suite}/{}: max {} error {:e} exceeds {:e}",
            c.name, c.metric, c.max_error, c.tolerance
        );
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct OverfitReport {
    config_hash: String,
    variant: &'static str,
    seed: u64,
    steps: usize,
    lr: f64,
    scale: usize,
    misalign: MisalignSpec,
    params: usize,
    macs: u64,
    similarity_evaluations: usize,
    #[serde(serialize_with = "ser_f64")]
    initial_loss: f64,
    #[serde(serialize_with = "ser_f64")]
    final_loss: f64,
    #[serde(serialize_with = "ser_f64")]
    loss_ratio: f64,
    #[serde(serialize_with = "ser_f64")]
    psnr_gain_db: f64,
    baseline: ImageMetrics,
    #[serde(rename = "final")]
    trained: ImageMetrics,
}

fn overfit_cmd(a: &OverfitArgs) -> Result<u8> {
    let base = resolve_config(&a.config)?.unwrap_or_else(NetworkConfig::desk);
    let variant = Variant::parse(&a.variant)?;
    let spec = a.misalign.as_deref().map(MisalignSpec::parse).transpose()?.unwrap_or_default();
    let lr = a.lr.unwrap_or(HARNESS_LR);
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(CanmError::usage(format!("--lr must be non-negative, got {lr}")));
    }
    let cfg = variant.apply(&base);
    cfg.validate()?;
    let [h, w] = cfg.input_size;
    let scale = a.scale as usize;
    let mut pair = synth_pair(a.seed, h, w, scale)?;
    pair.reference = misalign(&pair.reference, &spec)?;
    let mut net = Network::build(&cfg, a.seed)?;
    let counts = net.counts();
    let opts = OverfitOptions {
        steps: a.steps,
        lr,
        ..Default::default()
    };
    let o = overfit(&mut net, &pair, &opts)?;

    let initial_loss = o.losses.first().copied().unwrap_or(o.final_loss);
    let baseline = ImageMetrics { name: "baseline".into(), ..o.baseline };
    let trained = ImageMetrics { name: "final".into(), ..o.trained };
    let report = OverfitReport {
        config_hash: cfg.hash(),
        variant: variant.name(),
        seed: a.seed,
        steps: a.steps,
        lr,
        scale,
        misalign: spec,
        params: counts.params,
        macs: counts.macs,
        similarity_evaluations: o.evaluations,
        initial_loss,
        final_loss: o.final_loss,
        loss_ratio: o.final_loss / initial_loss,
        psnr_gain_db: trained.psnr - baseline.psnr,
        baseline: baseline.clone(),
        trained: trained.clone(),
    };
    let mut csv = String::from("step,loss\n");
    for (i, l) in o.losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l:e}");
    }
    let _ = writeln!(csv, "{},{:e}", a.steps, o.final_loss);
    let mut text = MetricReport::new(vec![baseline, trained]).to_text();
    let _ = writeln!(
        text,
        "\nvariant {}  seed {}  steps {}  lr {:e}\nloss {:.6e} -> {:.6e}  (ratio {:.4})  psnr gain {:+.3} dB",
        report.variant, a.seed, a.steps, lr, initial_loss, o.final_loss, report.loss_ratio, report.psnr_gain_db
    );

    let mut out = OutputSet::new();
    out.add("loss.csv", csv.into_bytes());
    out.add("report.json", to_json(&report)?);
    out.add("report.txt", text.clone().into_bytes());
    out.add("ref.png", encode_png(&pair.reference, BitDepth::Sixteen)?);
    out.add("hr.png", encode_png(&pair.hr, BitDepth::Sixteen)?);
    out.add("before.png", encode_png(&pair.lr_interp, BitDepth::Sixteen)?);
    out.add("after.png", encode_png(&o.output, BitDepth::Sixteen)?);
    if a.save_weights {
        net.save_weights(&a.out.join("weights"))?;
    }
    out.commit(&a.out)?;
    print!("{text}");
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MatchvizMeta {
    level: usize,
    grid: [usize; 2],
    neighborhood: [usize; 2],
    offsets: usize,
    center: usize,
    center_fraction: f64,
    distinct_offsets: usize,
    skip_adain: bool,
}

/// Index of the strongest valid offset per query; ties resolve to the center.
pub fn argmax_offsets(attn: &[f64], mask: &[bool], offsets: usize, center: usize) -> Vec<usize> {
    attn.chunks(offsets)
        .zip(mask.chunks(offsets))
        .map(|(row, m)| {
            let mut best = center;
            for j in 0..offsets {
                if m[j] && (!m[best] || row[j] > row[best]) {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn matchviz(a: &MatchvizArgs) -> Result<u8> {
    let level = a.level as usize;
    let net = load_network(&a.config, &a.weights)?;
    let (reference, _) = read_input(&a.reference, "--ref", &net.config)?;
    let (lr, _) = read_input(&a.lr, "--lr", &net.config)?;
    let (model, _) = net.bind(false)?;
    let fw = model.forward(&batch(&reference), &batch(&lr))?;
    let unaligned;
    let m = if a.skip_adain {
        let t = &fw.trace;
        unaligned = model.matches[level - 1].match_unaligned(&t.ref_features[level - 1], &t.deg_features[level - 1])?;
        unaligned.as_ref()
    } else {
        fw.matches[level - 1].as_ref()
    }
    .ok_or_else(|| CanmError::usage(format!("this network does no feature matching at level {level}")))?;
    let nb = &m.neighborhood;
    let j = nb.offsets();
    let attn = m.attention.value();
    // batch 1: one row per patch
    let best = argmax_offsets(&attn.data()[..nb.queries() * j], m.mask(), j, nb.center());
    let denom = (j - 1).max(1) as f64;
    let map = Tensor::new(&[nb.gh, nb.gw], best.iter().map(|&b| b as f64 / denom).collect())?;
    let depth = if j <= 256 { BitDepth::Eight } else { BitDepth::Sixteen };
    let mut distinct = best.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let meta = MatchvizMeta {
        level,
        grid: [nb.gh, nb.gw],
        neighborhood: [nb.nh, nb.nw],
        offsets: j,
        center: nb.center(),
        center_fraction: best.iter().filter(|&&b| b == nb.center()).count() as f64 / best.len() as f64,
        distinct_offsets: distinct.len(),
        skip_adain: a.skip_adain,
    };
    let tensor = |t: &Tensor| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, t, DType::F64).map_err(|e| CanmError::io("encoding tensor", e))?;
        Ok(buf)
    };
    let mut out = OutputSet::new();
    out.add("attention.canm", tensor(attn)?);
    out.add("similarity.canm", tensor(m.similarity.value())?);
    out.add("argmax.png", encode_png(&map, depth)?);
    out.add("meta.json", to_json(&meta)?);
    out.commit(&a.out)?;
    println!(
        "level {level}: {}x{} patches, {} offsets, center argmax for {:.2}% of patches",
        nb.gh,
        nb.gw,
        j,
        100.0 * meta.center_fraction
    );
    Ok(EXIT_OK)
}

fn init(a: &InitArgs) -> Result<u8> {
    let base = resolve_config(&a.config)?.unwrap_or_else(NetworkConfig::desk);
    let variant = Variant::parse(&a.variant)?;
    let mut net = Network::build_variant(&base, variant, a.seed)?;
    if a.share_branches {
        net.share_branches();
    }
    net.save_weights(&a.out)?;
    println!("wrote {} parameters ({} tensors) to {}", net.param_count(), net.params.len(), a.out.display());
    Ok(EXIT_OK)
}

fn synth(a: &SynthArgs) -> Result<u8> {
    let pair = synth_pair(a.seed, a.size, a.size, a.scale as usize)?;
    pair.export(&a.out)?;
    println!("wrote synthetic pair (seed {}) to {}", a.seed, a.out.display());
    Ok(EXIT_OK)
}
