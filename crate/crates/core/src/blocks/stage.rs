//! Encoder and decoder stages: stacks of layers with a resampler.

use super::ctl::{Ctl, CtlShape};
use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::params::{Conv, ConvShape, ParamSource};

#[derive(Clone, Debug)]
pub enum Resampler {
    /// 2x2 stride-2 convolution to the next level's width.
    Down(Conv),
    /// The deepest encoder level keeps its resolution.
    None,
}

#[derive(Clone, Debug)]
pub struct EncoderStage {
    pub ctls: Vec<Ctl>,
    pub down: Resampler,
}

#[derive(Clone, Debug)]
pub struct DecoderStage {
    /// 1x1 expansion to `4 * C` ahead of a 2x pixel shuffle.
    pub up: Conv,
    pub fuse: Conv,
    pub ctls: Vec<Ctl>,
}

/// Encoder output: the level's features (before downsampling) and the input to the next level.
pub struct EncoderOutput {
    pub features: Var,
    pub next: Option<Var>,
}

fn declare_ctls(src: &mut dyn ParamSource, name: &str, n: usize, s: &CtlShape) -> Result<Vec<Ctl>> {
    if !n.is_multiple_of(2) {
        return Err(CanmError::config(format!("{name}: layer count {n} must be even")));
    }
    (0..n)
        .map(|i| Ctl::declare(src, &format!("{name}.ctl{i}"), s, i % 2 == 1))
        .collect()
}

pub fn run_ctls(ctls: &[Ctl], x: &Var) -> Result<Var> {
    ctls.iter().try_fold(x.clone(), |h, ctl| ctl.forward(&h))
}

impl EncoderStage {
    /// `next_channels: None` marks the deepest level (no downsampler).
    pub fn declare(
        src: &mut dyn ParamSource,
        name: &str,
        n_ctl: usize,
        s: &CtlShape,
        next_channels: Option<usize>,
    ) -> Result<Self> {
        let ctls = declare_ctls(src, name, n_ctl, s)?;
        let down = match next_channels {
            Some(c) => Resampler::Down(Conv::declare(
                src,
                &format!("{name}.down"),
                ConvShape::strided(s.channels, c, 2, 2, 0),
            )?),
            None => Resampler::None,
        };
        Ok(EncoderStage { ctls, down })
    }

    pub fn forward(&self, x: &Var) -> Result<EncoderOutput> {
        let features = run_ctls(&self.ctls, x)?;
        let next = match &self.down {
            Resampler::Down(conv) => Some(conv.forward(&features)?),
            Resampler::None => None,
        };
        Ok(EncoderOutput { features, next })
    }
}

impl DecoderStage {
    pub fn declare(
        src: &mut dyn ParamSource,
        name: &str,
        n_ctl: usize,
        s: &CtlShape,
        deep_channels: usize,
    ) -> Result<Self> {
        let c = s.channels;
        Ok(DecoderStage {
            up: Conv::declare(src, &format!("{name}.up"), ConvShape::pointwise(deep_channels, 4 * c))?,
            fuse: Conv::declare(src, &format!("{name}.fuse"), ConvShape::pointwise(2 * c, c))?,
            ctls: declare_ctls(src, name, n_ctl, s)?,
        })
    }

    pub fn forward(&self, deep: &Var, skip: Option<&Var>) -> Result<Var> {
        let skip = skip.ok_or_else(|| CanmError::usage("decoder stage requires a skip connection"))?;
        let up = self.up.forward(deep)?.pixel_shuffle(2)?;
        if up.shape() != skip.shape() {
            return Err(CanmError::shape(format!(
                "upsampled {:?} does not match skip {:?}",
                up.shape(),
                skip.shape()
            )));
        }
        let fused = self.fuse.forward(&Var::concat(&[&up, skip], 1)?)?;
        run_ctls(&self.ctls, &fused)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::ctl::MixerKind;
    use crate::params::{ParamBinder, ParamInit};
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(c: usize) -> CtlShape {
        CtlShape {
            channels: c,
            wa_heads: 2,
            ca_heads: 1,
            window: 4,
            ffb_ratio: 2,
            mixer: MixerKind::default(),
        }
    }

    fn rand(shape: &[usize], seed: u64) -> Var {
        Var::constant(Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    #[test]
    fn encoder_halves_and_widens() {
        let st = EncoderStage::declare(&mut ParamInit::untracked(0), "e", 2, &shape(4), Some(8)).unwrap();
        let out = st.forward(&rand(&[1, 4, 8, 8], 1)).unwrap();
        assert_eq!(out.features.shape(), &[1, 4, 8, 8]);
        assert_eq!(out.next.unwrap().shape(), &[1, 8, 4, 4]);
    }

    #[test]
    fn odd_layer_count_is_rejected() {
        assert!(EncoderStage::declare(&mut ParamInit::new(0), "e", 3, &shape(4), None).is_err());
    }

    #[test]
    fn decoder_requires_skip() {
        let st = DecoderStage::declare(&mut ParamInit::untracked(0), "d", 2, &shape(4), 8).unwrap();
        let err = st.forward(&rand(&[1, 8, 4, 4], 0), None).unwrap_err();
        assert!(matches!(err, CanmError::Usage(_)));
        let y = st.forward(&rand(&[1, 8, 4, 4], 0), Some(&rand(&[1, 4, 8, 8], 1))).unwrap();
        assert_eq!(y.shape(), &[1, 4, 8, 8]);
    }

    #[test]
    fn zero_layers_with_pooling_downsampler_pool_the_input() {
        let s = shape(4);
        let mut init = ParamInit::new(0);
        EncoderStage::declare(&mut init, "e", 2, &s, Some(4)).unwrap();
        let mut store = init.into_store();
        for (name, t) in store.iter_mut() {
            *t = if name == "e.down.weight" {
                Tensor::from_fn(t.shape(), |i| if i[0] == i[1] { 0.25 } else { 0.0 })
            } else {
                Tensor::zeros(t.shape())
            };
        }
        let st = EncoderStage::declare(&mut ParamBinder::new(&store, false), "e", 2, &s, Some(4)).unwrap();
        let x = rand(&[1, 4, 8, 8], 2);
        let y = st.forward(&x).unwrap().next.unwrap();
        assert!(y.value().max_abs_diff(x.avg_pool(2).unwrap().value()) < 1e-15);
    }

    #[test]
    fn two_layers_compose() {
        let st = EncoderStage::declare(&mut ParamInit::untracked(4), "e", 2, &shape(4), None).unwrap();
        let x = rand(&[1, 4, 8, 8], 3);
        let manual = st.ctls[1].forward(&st.ctls[0].forward(&x).unwrap()).unwrap();
        assert_eq!(st.forward(&x).unwrap().features.value(), manual.value());
    }
}
