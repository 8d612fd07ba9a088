//! Loss and image-quality metrics.

pub mod report;
pub mod ssim;

pub use report::{Aggregate, ImageMetrics, MetricReport};
pub use ssim::ssim;

use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

/// Mean absolute error.
pub fn l1_loss(y: &Var, t: &Var) -> Result<Var> {
    if y.shape() != t.shape() {
        return Err(CanmError::shape(format!(
            "l1 loss shapes differ: {:?} vs {:?}",
            y.shape(),
            t.shape()
        )));
    }
    y.sub(t)?.abs()?.mean()
}

pub fn l1(y: &Tensor, t: &Tensor) -> Result<f64> {
    Ok(y.zip_map(t, |a, b| (a - b).abs())?.mean())
}

pub fn mse(y: &Tensor, t: &Tensor) -> Result<f64> {
    Ok(y.zip_map(t, |a, b| (a - b) * (a - b))?.mean())
}

/// Peak signal-to-noise ratio in dB; identical images give `+inf`.
pub fn psnr(y: &Tensor, t: &Tensor, data_range: f64) -> Result<f64> {
    let m = mse(y, t)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / m).log10()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_cases() {
        let t = Tensor::from_fn(&[3, 3], |i| (i[0] + i[1]) as f64 * 0.1);
        assert_eq!(l1(&t, &t).unwrap(), 0.0);
        assert!((l1(&t.map(|v| v + 0.5), &t).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn psnr_cases() {
        let t = Tensor::full(&[4, 4], 0.5);
        assert_eq!(psnr(&t, &t, 1.0).unwrap(), f64::INFINITY);
        let y = t.map(|v| v + 0.1);
        assert!((psnr(&y, &t, 1.0).unwrap() - 20.0).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        let a = Var::constant(Tensor::zeros(&[2]));
        let b = Var::constant(Tensor::zeros(&[3]));
        assert!(l1_loss(&a, &b).is_err());
    }
}
