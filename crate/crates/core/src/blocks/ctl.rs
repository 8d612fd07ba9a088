//! The compound transformer layer.

use super::attention::{Cab, FullChannelAttn, Wab};
use super::ffb::Ffb;
use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::params::{ChannelNorm, Conv, ConvShape, ParamSource};

/// Which token mixers a layer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MixerKind {
    pub window: bool,
    pub channel: ChannelKind,
    /// Replace attention with `conv3x3 -> gelu -> conv3x3`.
    pub cnn_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    None,
    Pyramid,
    FullScale,
}

impl Default for MixerKind {
    fn default() -> Self {
        MixerKind {
            window: true,
            channel: ChannelKind::Pyramid,
            cnn_only: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CtlShape {
    pub channels: usize,
    pub wa_heads: usize,
    pub ca_heads: usize,
    pub window: usize,
    pub ffb_ratio: usize,
    pub mixer: MixerKind,
}

#[derive(Clone, Debug)]
pub enum ChannelMixer {
    Pyramid(Cab),
    FullScale(FullChannelAttn),
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Mixer {
    Attention {
        wab: Option<Wab>,
        cab: Option<ChannelMixer>,
        dr: Conv,
    },
    Cnn {
        conv1: Conv,
        conv2: Conv,
    },
}

#[derive(Clone, Debug)]
pub struct Ctl {
    pub norm_attn: ChannelNorm,
    pub mixer: Mixer,
    pub norm_ffb: ChannelNorm,
    pub ffb: Ffb,
}

impl Ctl {
    /// `shift` selects the shifted-window variant of the window path.
    pub fn declare(src: &mut dyn ParamSource, name: &str, s: &CtlShape, shift: bool) -> Result<Self> {
        let c = s.channels;
        let mixer = if s.mixer.cnn_only {
            Mixer::Cnn {
                conv1: Conv::declare(src, &format!("{name}.cnn.conv1"), ConvShape::same(c, c, 3))?,
                conv2: Conv::declare(src, &format!("{name}.cnn.conv2"), ConvShape::same(c, c, 3))?,
            }
        } else {
            let wab = if s.mixer.window {
                Some(Wab::declare(src, &format!("{name}.wab"), c, s.wa_heads, s.window, shift)?)
            } else {
                None
            };
            let cab = match s.mixer.channel {
                ChannelKind::None => None,
                ChannelKind::Pyramid => Some(ChannelMixer::Pyramid(Cab::declare(src, &format!("{name}.cab"), c, s.ca_heads)?)),
                ChannelKind::FullScale => Some(ChannelMixer::FullScale(FullChannelAttn::declare(
                    src,
                    &format!("{name}.cab"),
                    c,
                    s.ca_heads,
                )?)),
            };
            let paths = wab.is_some() as usize + cab.is_some() as usize;
            if paths == 0 {
                return Err(CanmError::config(format!("{name}: a layer needs at least one attention path")));
            }
            let dr = Conv::declare(src, &format!("{name}.dr"), ConvShape::pointwise(paths * c, c))?;
            Mixer::Attention { wab, cab, dr }
        };
        Ok(Ctl {
            norm_attn: ChannelNorm::declare(src, &format!("{name}.norm.attn"), c)?,
            mixer,
            norm_ffb: ChannelNorm::declare(src, &format!("{name}.norm.ffb"), c)?,
            ffb: Ffb::declare(src, &format!("{name}.ffb"), c, s.ffb_ratio)?,
        })
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let n = self.norm_attn.forward(x)?;
        let mixed = match &self.mixer {
            Mixer::Attention { wab, cab, dr } => {
                let mut parts = Vec::with_capacity(2);
                if let Some(wab) = wab {
                    parts.push(wab.forward(&n)?);
                }
                match cab {
                    Some(ChannelMixer::Pyramid(cab)) => parts.push(cab.forward(&n)?),
                    Some(ChannelMixer::FullScale(cab)) => parts.push(cab.forward(&n)?),
                    None => {}
                }
                let cat = if parts.len() == 1 {
                    parts.pop().unwrap()
                } else {
                    Var::concat(&parts.iter().collect::<Vec<_>>(), 1)?
                };
                dr.forward(&cat)?
            }
            Mixer::Cnn { conv1, conv2 } => conv2.forward(&conv1.forward(&n)?.gelu()?)?,
        };
        x.add(&self.ffb.forward(&self.norm_ffb.forward(&mixed)?)?)
    }
}
