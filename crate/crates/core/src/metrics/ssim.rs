//! Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
//! positions where the window fits entirely inside the image.

use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;

pub fn gaussian_window() -> Vec<f64> {
    let r = (WINDOW / 2) as f64;
    let g: Vec<f64> = (0..WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of an `h x w` map.
fn filter(src: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| g[k] * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim(a: &Tensor, b: &Tensor, data_range: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(CanmError::shape(format!("ssim shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let &[h, w] = a.shape() else {
        return Err(CanmError::shape(format!("ssim needs [H, W] images, got {:?}", a.shape())));
    };
    if h < WINDOW || w < WINDOW {
        return Err(CanmError::usage(format!("ssim needs images of at least {WINDOW}x{WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_window();
    let (x, y) = (a.data(), b.data());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect() };
    let mu_x = filter(x, h, w, &g);
    let mu_y = filter(y, h, w, &g);
    let xx = filter(&prod(&|p, _| p * p), h, w, &g);
    let yy = filter(&prod(&|_, q| q * q), h, w, &g);
    let xy = filter(&prod(&|p, q| p * q), h, w, &g);
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = xx[i] - mx * mx;
            let vy = yy[i] - my * my;
            let cxy = xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_is_one() {
        let t = Tensor::from_fn(&[16, 20], |i| ((i[0] * 7 + i[1] * 3) % 10) as f64 / 10.0);
        assert!((ssim(&t, &t, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_checkerboard_is_negative() {
        let t = Tensor::from_fn(&[16, 16], |i| ((i[0] + i[1]) % 2) as f64);
        let inv = t.map(|v| 1.0 - v);
        assert!(ssim(&t, &inv, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn constants_match_closed_form() {
        let (a, b) = (0.3, 0.7);
        let c1: f64 = 0.01f64.powi(2);
        let c2: f64 = 0.03f64.powi(2);
        let expect = ((2.0 * a * b + c1) * c2) / ((a * a + b * b + c1) * c2);
        let got = ssim(&Tensor::full(&[12, 12], a), &Tensor::full(&[12, 12], b), 1.0).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} {expect}");
    }

    #[test]
    fn small_images_are_rejected() {
        let t = Tensor::zeros(&[10, 30]);
        assert!(matches!(ssim(&t, &t, 1.0), Err(CanmError::Usage(_))));
    }

    #[test]
    fn window_is_normalized() {
        assert!((gaussian_window().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
