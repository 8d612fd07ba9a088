//! Optimization: Adam and single-pair overfitting.

pub mod adam;
pub mod overfit;

pub use adam::Adam;
pub use overfit::{overfit, OverfitOptions, OverfitOutcome};
