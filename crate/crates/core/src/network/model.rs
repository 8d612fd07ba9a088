//! Assembly of the two-branch U-shaped network.

use super::config::{NetworkConfig, LEVELS, MATCH_LEVELS};
use crate::autodiff::Var;
use crate::blocks::{DecoderStage, EncoderStage};
use crate::error::{CanmError, Result};
use crate::matching::{MatchResult, MatchUnit};
use crate::params::{Conv, ConvShape, Init, ParamSource};

/// All blocks of one network, holding graph leaves for every parameter.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: NetworkConfig,
    pub head_ref: Conv,
    pub head_deg: Conv,
    pub enc_ref: Vec<EncoderStage>,
    pub enc_deg: Vec<EncoderStage>,
    pub matches: Vec<MatchUnit>,
    pub bottleneck: Conv,
    /// Decoder stages for levels 1..=3 (run deepest first).
    pub dec: Vec<DecoderStage>,
    pub out_expand: Conv,
    pub out_conv: Conv,
}

/// Intermediate maps of one forward pass.
pub struct Trace {
    pub ref_features: Vec<Var>,
    pub deg_features: Vec<Var>,
    pub fused: Vec<Var>,
    pub bottleneck: Var,
    pub decoded: Vec<Var>,
}

pub struct ForwardOutput {
    pub output: Var,
    pub matches: Vec<Option<MatchResult>>,
    pub trace: Trace,
}

fn head_shape(cout: usize) -> ConvShape {
    ConvShape::strided(1, cout, 3, 2, 1)
}

impl Model {
    /// Declares every parameter of `cfg` through `src`.
    pub fn declare(src: &mut dyn ParamSource, cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let ch = cfg.channels;
        let encoder = |src: &mut dyn ParamSource, branch: &str| -> Result<Vec<EncoderStage>> {
            (1..=LEVELS)
                .map(|k| {
                    let next = (k < LEVELS).then(|| ch[k]);
                    EncoderStage::declare(src, &format!("{branch}.stage{k}"), cfg.cte_ctls[k - 1], &cfg.ctl_shape(k), next)
                })
                .collect()
        };
        let head_ref = Conv::declare(src, "head_ref", head_shape(ch[0]))?;
        let head_deg = Conv::declare(src, "head_deg", head_shape(ch[0]))?;
        let enc_ref = encoder(src, "enc_ref")?;
        let enc_deg = encoder(src, "enc_deg")?;
        let matches = (1..=MATCH_LEVELS)
            .map(|k| {
                let [nh, nw] = cfg.neighborhoods[k - 1];
                let [ph, pw] = cfg.patch_size;
                MatchUnit::declare(src, &format!("match{k}"), ch[k - 1], cfg.level_size(k), (ph, pw), (nh, nw), cfg.matching)
            })
            .collect::<Result<Vec<_>>>()?;
        let bottleneck = Conv::declare(src, "bottleneck.fuse", ConvShape::pointwise(2 * ch[3], ch[3]))?;
        let dec = (1..=MATCH_LEVELS)
            .map(|k| DecoderStage::declare(src, &format!("dec.stage{k}"), cfg.ctd_ctls[k - 1], &cfg.ctl_shape(k), ch[k]))
            .collect::<Result<Vec<_>>>()?;
        let out_expand = Conv::declare(src, "out.expand", ConvShape::pointwise(ch[0], 4 * ch[0]))?;
        let out_conv = Conv::declare_with(src, "out.conv", ConvShape::same(ch[0], 1, 3), Init::Zeros, Init::Zeros)?;
        Ok(Model {
            config: cfg.clone(),
            head_ref,
            head_deg,
            enc_ref,
            enc_deg,
            matches,
            bottleneck,
            dec,
            out_expand,
            out_conv,
        })
    }

    fn check_input(&self, x: &Var, what: &str) -> Result<()> {
        let [h, w] = self.config.input_size;
        match *x.shape() {
            [_, 1, xh, xw] if (xh, xw) == (h, w) => Ok(()),
            ref s => Err(CanmError::shape(format!(
                "{what} must be [B, 1, {h}, {w}], got {s:?}"
            ))),
        }
    }

    /// `reference` and `lr_interp` are `[B, 1, H, W]` at the configured resolution.
    pub fn forward(&self, reference: &Var, lr_interp: &Var) -> Result<ForwardOutput> {
        self.check_input(reference, "reference")?;
        self.check_input(lr_interp, "lr input")?;
        if reference.shape()[0] != lr_interp.shape()[0] {
            return Err(CanmError::shape(format!(
                "batch sizes differ: {:?} vs {:?}",
                reference.shape(),
                lr_interp.shape()
            )));
        }
        let mut r = self.head_ref.forward(reference)?;
        let mut d = self.head_deg.forward(lr_interp)?;
        let (mut ref_features, mut deg_features) = (Vec::new(), Vec::new());
        for (er, ed) in self.enc_ref.iter().zip(&self.enc_deg) {
            let (or, od) = (er.forward(&r)?, ed.forward(&d)?);
            ref_features.push(or.features);
            deg_features.push(od.features);
            if let (Some(nr), Some(nd)) = (or.next, od.next) {
                r = nr;
                d = nd;
            }
        }
        let mut fused = Vec::new();
        let mut matches = Vec::new();
        for (k, unit) in self.matches.iter().enumerate() {
            let out = unit.forward(&ref_features[k], &deg_features[k])?;
            fused.push(out.fused);
            matches.push(out.result);
        }
        let bottleneck = self
            .bottleneck
            .forward(&Var::concat(&[&ref_features[3], &deg_features[3]], 1)?)?;
        let mut x = bottleneck.clone();
        let mut decoded = Vec::new();
        for k in (0..MATCH_LEVELS).rev() {
            x = self.dec[k].forward(&x, Some(&fused[k]))?;
            decoded.push(x.clone());
        }
        let mut y = self.out_conv.forward(&self.out_expand.forward(&x)?.pixel_shuffle(2)?)?;
        if self.config.global_residual {
            y = y.add(lr_interp)?;
        }
        Ok(ForwardOutput {
            output: y,
            matches,
            trace: Trace {
                ref_features,
                deg_features,
                fused,
                bottleneck,
                decoded,
            },
        })
    }
}
