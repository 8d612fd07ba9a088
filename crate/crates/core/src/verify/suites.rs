//! Named verification suites and their report.

use std::fmt::Write;

use indexmap::IndexMap;
use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::gradcheck::{gradcheck, Coords, CoordFailure, GradReport, GradcheckOptions};
use super::oracles::{self, OracleCheck};
use super::{randomized, rng};
use crate::autodiff::{Conv2dSpec, Resample, Var};
use crate::blocks::{Cab, Ctl, CtlShape, DecoderStage, EncoderStage, Ffb, FullChannelAttn, MixerKind, Wab};
use crate::error::{CanmError, Result};
use crate::matching::{nbfm_match, Adain, MatchMode, MatchUnit, Neighborhood};
use crate::metrics::report::{fmt_f64, ser_f64};
use crate::network::{Network, NetworkConfig};
use crate::params::{param_rng, ParamBinder, ParamInit, ParamSource, VarSource};
use crate::tensor::Tensor;

pub const BLOCK_TOL: f64 = 1e-6;
pub const NETWORK_TOL: f64 = 1e-5;
pub const NETWORK_PARAMS: usize = 16;
const GRAD_SEED: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Grad,
    Oracle,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grad" => Ok(Suite::Grad),
            "oracle" => Ok(Suite::Oracle),
            "all" => Ok(Suite::All),
            other => Err(CanmError::usage(format!("unknown suite `{other}` (expected grad, oracle or all)"))),
        }
    }
}

/// Deliberate defects for exercising the failure path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Perturb the analytic gradient of the matching weight `W`.
    NbfmWeightGrad,
}

impl Fault {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nbfm-w" => Ok(Fault::NbfmWeightGrad),
            other => Err(CanmError::usage(format!("unknown fault `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Overrides every check's tolerance.
    pub tolerance: Option<f64>,
    pub fault: Option<Fault>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckEntry {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `rel` for gradient checks, `abs` for oracle comparisons.
    pub metric: &'static str,
    #[serde(serialize_with = "ser_f64")]
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checked: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failing: Vec<CoordFailure>,
}

impl CheckEntry {
    fn grad(name: &str, r: GradReport) -> Self {
        CheckEntry {
            name: name.to_string(),
            seed: None,
            metric: "rel",
            max_error: r.max_rel_error,
            tolerance: r.tolerance,
            passed: r.passed,
            checked: Some(r.checked),
            failing: r.failing,
        }
    }

    fn oracle(c: OracleCheck, tol: Option<f64>) -> Self {
        let tolerance = tol.unwrap_or(c.tolerance);
        CheckEntry {
            name: c.name,
            seed: Some(c.seed),
            metric: "abs",
            max_error: c.max_abs_diff,
            tolerance,
            passed: c.max_abs_diff <= tolerance,
            checked: None,
            failing: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    #[serde(serialize_with = "ser_f64")]
    pub max_error: f64,
    pub checks: Vec<CheckEntry>,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<CheckEntry>) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            passed: checks.iter().all(|c| c.passed),
            max_error: checks.iter().map(|c| c.max_error).fold(0.0, f64::max),
            checks,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &CheckEntry)> {
        self.suites
            .iter()
            .flat_map(|s| s.checks.iter().filter(|c| !c.passed).map(move |c| (s.suite.as_str(), c)))
    }

    pub fn to_text(&self) -> String {
        let width = self
            .suites
            .iter()
            .flat_map(|s| s.checks.iter().map(|c| c.name.len()))
            .max()
            .unwrap_or(4)
            .max(5);
        let mut s = String::new();
        for suite in &self.suites {
            let _ = writeln!(s, "[{}] {}", suite.suite, if suite.passed { "PASS" } else { "FAIL" });
            for c in &suite.checks {
                let seed = c.seed.map_or(String::new(), |v| v.to_string());
                let _ = writeln!(
                    s,
                    "  {:<width$}  {:>4}  {:>6}  max={:>12}  tol={:<8e}  {}",
                    c.name,
                    c.metric,
                    seed,
                    fmt_f64(c.max_error, 3),
                    c.tolerance,
                    if c.passed { "ok" } else { "FAILED" }
                );
            }
        }
        let _ = writeln!(s, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

/// Fixed pseudo-random weights so the readout mixes every output entry.
fn readout(y: &Var) -> Result<Var> {
    let n = y.value().len();
    let w = Tensor::new(y.shape(), (0..n).map(|k| (0.37 * k as f64 + 0.1).sin() + 0.25).collect())?;
    y.mul(&Var::constant(w))?.sum()
}

fn rand(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut rng(seed))
}

/// Gradcheck of a parameterized block with respect to its inputs and every parameter.
fn block_check<T>(
    name: &str,
    xs: Vec<Tensor>,
    declare: impl Fn(&mut dyn ParamSource) -> Result<T>,
    run: impl Fn(&T, &[Var]) -> Result<Var>,
    opts: &GradcheckOptions,
) -> Result<CheckEntry> {
    let (_, store) = randomized(GRAD_SEED, 0.5, &declare)?;
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let nx = xs.len();
    let mut inputs = xs;
    inputs.extend(store.iter().map(|(_, t)| t.clone()));
    let report = gradcheck(
        |v| {
            let map: IndexMap<String, Var> = names.iter().cloned().zip(v[nx..].iter().cloned()).collect();
            let block = declare(&mut VarSource::new(&map))?;
            readout(&run(&block, &v[..nx])?)
        },
        &inputs,
        opts,
    )?;
    Ok(CheckEntry::grad(name, report))
}

fn op_check(name: &str, xs: Vec<Tensor>, f: impl Fn(&[Var]) -> Result<Var>, opts: &GradcheckOptions) -> Result<CheckEntry> {
    Ok(CheckEntry::grad(name, gradcheck(|v| readout(&f(v)?), &xs, opts)?))
}

fn ctl_shape(c: usize, mixer: MixerKind) -> CtlShape {
    CtlShape {
        channels: c,
        wa_heads: 2,
        ca_heads: 2,
        window: 4,
        ffb_ratio: 2,
        mixer,
    }
}

/// Gradient checks of every block, plus the desk network on sampled parameters.
pub fn grad_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let tol = opts.tolerance.unwrap_or(BLOCK_TOL);
    let all = GradcheckOptions::new(tol);
    let some = GradcheckOptions::new(tol).sample(6, GRAD_SEED);
    let mut checks = vec![
        op_check("matmul", vec![rand(&[2, 3, 4], 1), rand(&[2, 4, 5], 2)], |v| v[0].matmul(&v[1]), &all)?,
        op_check(
            "conv2d_strided",
            vec![rand(&[1, 2, 5, 5], 3), rand(&[3, 2, 3, 3], 4), rand(&[3], 5)],
            |v| {
                let spec = Conv2dSpec {
                    stride: 2,
                    padding: 1,
                    groups: 1,
                };
                v[0].conv2d(&v[1], Some(&v[2]), spec)
            },
            &all,
        )?,
        op_check(
            "conv2d_depthwise",
            vec![rand(&[2, 4, 4, 4], 6), rand(&[4, 1, 3, 3], 7)],
            |v| {
                let spec = Conv2dSpec {
                    groups: 4,
                    ..Conv2dSpec::same(3)
                };
                v[0].conv2d(&v[1], None, spec)
            },
            &all,
        )?,
    ];
    for (name, mode) in [
        ("avg_pool2", Resample::AvgPoolDown2),
        ("avg_pool4", Resample::AvgPoolDown4),
        ("pixel_shuffle", Resample::PixelShuffleUp2),
    ] {
        checks.push(op_check(name, vec![rand(&[1, 4, 8, 8], 8)], |v| v[0].resample(mode), &all)?);
    }

    let x8 = || vec![rand(&[1, 4, 8, 8], 9)];
    checks.push(block_check("wab", x8(), |s| Wab::declare(s, "wab", 4, 2, 4, false), |b, v| b.forward(&v[0]), &some)?);
    checks.push(block_check(
        "wab_shifted",
        x8(),
        |s| Wab::declare(s, "wab", 4, 2, 4, true),
        |b, v| b.forward(&v[0]),
        &some,
    )?);
    checks.push(block_check("cab", x8(), |s| Cab::declare(s, "cab", 4, 2), |b, v| b.forward(&v[0]), &some)?);
    checks.push(block_check(
        "channel_attn_full",
        x8(),
        |s| FullChannelAttn::declare(s, "ca", 4, 2),
        |b, v| b.forward(&v[0]),
        &some,
    )?);
    checks.push(block_check("ffb", x8(), |s| Ffb::declare(s, "ffb", 4, 2), |b, v| b.forward(&v[0]), &some)?);
    for (name, mixer) in [
        ("ctl", MixerKind::default()),
        (
            "ctl_cnn",
            MixerKind {
                cnn_only: true,
                ..MixerKind::default()
            },
        ),
    ] {
        checks.push(block_check(
            name,
            x8(),
            |s| Ctl::declare(s, "ctl", &ctl_shape(4, mixer), true),
            |b, v| b.forward(&v[0]),
            &some,
        )?);
    }
    checks.push(block_check(
        "encoder_stage",
        x8(),
        |s| EncoderStage::declare(s, "enc", 2, &ctl_shape(4, MixerKind::default()), Some(8)),
        |b, v| b.forward(&v[0]).map(|o| o.next.expect("has down")),
        &some,
    )?);
    checks.push(block_check(
        "decoder_stage",
        vec![rand(&[1, 8, 4, 4], 10), rand(&[1, 4, 8, 8], 11)],
        |s| DecoderStage::declare(s, "dec", 2, &ctl_shape(4, MixerKind::default()), 8),
        |b, v| b.forward(&v[0], Some(&v[1])),
        &some,
    )?);
    checks.push(block_check(
        "adain",
        vec![rand(&[2, 3, 6, 6], 12), rand(&[2, 3, 6, 6], 13)],
        |s| Adain::declare(s, "adain", 3),
        |b, v| b.forward(&v[0], &v[1]),
        &some,
    )?);

    // matching: query patches, reference patches, W
    let nb = Neighborhood::new(4, 5, 3, 3)?;
    let mut nbfm_opts = all.clone();
    if opts.fault == Some(Fault::NbfmWeightGrad) {
        nbfm_opts.corrupt_input = Some(2);
    }
    let mut wr = rng(14);
    let w = Tensor::new(&[9], (0..9).map(|_| wr.random_range(0.5..3.0)).collect())?;
    let nbfm = gradcheck(
        |v| {
            let m = nbfm_match(&v[0], &v[1], &nb, &v[2])?;
            readout(&m.matched)?.add(&readout(&m.attention)?)
        },
        &[rand(&[1, 20, 6], 15), rand(&[1, 20, 6], 16), w],
        &nbfm_opts,
    )?;
    checks.push(CheckEntry::grad("nbfm_with_w", nbfm));
    checks.push(block_check(
        "match_unit",
        vec![rand(&[1, 3, 6, 6], 17), rand(&[1, 3, 6, 6], 18)],
        |s| MatchUnit::declare(s, "match1", 3, (6, 6), (3, 3), (3, 3), MatchMode::Nbfm),
        |b, v| b.forward(&v[0], &v[1]).map(|o| o.fused),
        &some,
    )?);

    let mut net_opts = GradcheckOptions::new(opts.tolerance.unwrap_or(NETWORK_TOL));
    net_opts.step = all.step;
    checks.push(network_check(&NetworkConfig::desk(), NETWORK_PARAMS, &mut net_opts)?);
    Ok(SuiteReport::new("grad", checks))
}

/// Full-network gradcheck on `count` distinct parameter tensors, one coordinate each.
/// All parameters are redrawn at a larger scale (including the zero output head)
/// so that gradients reaching the first stages stay well above difference noise.
pub fn network_check(cfg: &NetworkConfig, count: usize, opts: &mut GradcheckOptions) -> Result<CheckEntry> {
    let mut net = Network::build(cfg, GRAD_SEED)?;
    for (name, t) in net.params.iter_mut() {
        *t = Tensor::randn(t.shape(), 0.2, &mut param_rng(GRAD_SEED ^ 0xface, name));
    }
    let names: Vec<String> = net.params.names().map(str::to_string).collect();
    let tensors: Vec<Tensor> = net.params.iter().map(|(_, t)| t.clone()).collect();
    let mut r = rng(GRAD_SEED);
    let mut picks = sample(&mut r, names.len(), count.min(names.len())).into_vec();
    picks.sort_unstable();
    opts.coords = Coords::Explicit(picks.iter().map(|&i| (i, r.random_range(0..tensors[i].len()))).collect());
    let [h, w] = cfg.input_size;
    let reference = Var::constant(rand(&[1, 1, h, w], 19).map(|v| 0.5 + 0.2 * v));
    let lr = Var::constant(rand(&[1, 1, h, w], 20).map(|v| 0.5 + 0.2 * v));
    let report = gradcheck(
        |v| {
            let map: IndexMap<String, Var> = names.iter().cloned().zip(v.iter().cloned()).collect();
            let model = net.model_from_vars(&map)?;
            // residual only: the pass-through term adds rounding noise and no gradient
            readout(&model.forward(&reference, &lr)?.output.sub(&lr)?)
        },
        &tensors,
        opts,
    )?;
    Ok(CheckEntry::grad("network_desk", report))
}

/// Structural invariants: stochastic attention rows, matching locality, identity layers.
pub fn invariant_checks() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    let x = Var::constant(rand(&[2, 4, 8, 8], 21));
    let rows = |a: &Var| {
        let s = a.value().shape();
        let d = s[s.len() - 1];
        a.value()
            .data()
            .chunks(d)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let (wab, _) = randomized(21, 0.5, |s| Wab::declare(s, "wab", 4, 2, 4, true))?;
    out.push(OracleCheck::new("wab_rows_sum_to_one", 21, rows(&wab.attention(&x)?), 1e-12));
    let (cab, _) = randomized(21, 0.5, |s| Cab::declare(s, "cab", 4, 2))?;
    out.push(OracleCheck::new("cab_rows_sum_to_one", 21, rows(&cab.attention(&x)?), 1e-12));

    let nb = Neighborhood::new(6, 6, 3, 3)?;
    let q = rand(&[1, 36, 5], 22);
    let mut r = rand(&[1, 36, 5], 23);
    let w = Var::constant(Tensor::full(&[9], 1.5));
    let m0 = nbfm_match(&Var::constant(q.clone()), &Var::constant(r.clone()), &nb, &w)?;
    out.push(OracleCheck::new("nbfm_rows_sum_to_one", 22, rows(&m0.attention), 1e-12));
    // query 0 sits at (0, 0); patch 35 at (5, 5) is far outside its window
    for e in 0..5 {
        r.set(&[0, 35, e], 100.0 + e as f64);
    }
    let m1 = nbfm_match(&Var::constant(q), &Var::constant(r), &nb, &w)?;
    let row = |m: &crate::matching::MatchResult| -> Vec<f64> {
        let mut v = m.attention.value().data()[..9].to_vec();
        v.extend_from_slice(&m.matched.value().data()[..5]);
        v
    };
    let same = row(&m0) == row(&m1);
    out.push(OracleCheck::new("nbfm_locality_bitwise", 23, if same { 0.0 } else { 1.0 }, 0.0));

    let mut init = ParamInit::untracked(0);
    Ctl::declare(&mut init, "ctl", &ctl_shape(4, MixerKind::default()), true)?;
    let mut store = init.into_store();
    store.iter_mut().for_each(|(_, t)| *t = Tensor::zeros(t.shape()));
    let zero = Ctl::declare(&mut ParamBinder::new(&store, false), "ctl", &ctl_shape(4, MixerKind::default()), true)?;
    let y = zero.forward(&x)?;
    out.push(OracleCheck::new("ctl_zero_weights_identity", 0, y.value().max_abs_diff(x.value()), 0.0));
    Ok(out)
}

/// Every brute-force oracle suite, by name.
pub fn oracle_suites(opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    type Checks = fn() -> Result<Vec<OracleCheck>>;
    let suites: [(&str, Checks); 8] = [
        ("wab", oracles::wab_checks),
        ("cab", oracles::cab_checks),
        ("nbfm", oracles::nbfm_checks),
        ("gfm", oracles::gfm_checks),
        ("spectral", oracles::spectral_checks),
        ("fold", oracles::fold_checks),
        ("metrics", oracles::metric_checks),
        ("invariants", invariant_checks),
    ];
    suites
        .iter()
        .map(|(name, f)| {
            let checks = f()?.into_iter().map(|c| CheckEntry::oracle(c, opts.tolerance)).collect();
            Ok(SuiteReport::new(name, checks))
        })
        .collect()
}

pub fn run(suite: Suite, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut suites = Vec::new();
    if matches!(suite, Suite::Grad | Suite::All) {
        suites.push(grad_suite(opts)?);
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        suites.extend(oracle_suites(opts)?);
    }
    Ok(VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}
