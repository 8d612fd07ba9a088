pub mod autodiff;
pub mod blocks;
pub mod cli;
pub mod data;
pub mod error;
pub mod fsutil;
pub mod matching;
pub mod metrics;
pub mod network;
pub mod params;
pub mod tensor;
pub mod train;
pub mod verify;

pub use autodiff::Var;
pub use error::{CanmError, Result};
pub use tensor::Tensor;
