//! Transformer building blocks.

pub mod attention;
pub mod ctl;
pub mod ffb;
pub mod stage;
pub mod window;

pub use attention::{Cab, FullChannelAttn, Wab};
pub use ctl::{ChannelKind, Ctl, CtlShape, MixerKind};
pub use ffb::Ffb;
pub use stage::{DecoderStage, EncoderStage};
pub use window::{window_partition, window_reverse, WindowGrid};
