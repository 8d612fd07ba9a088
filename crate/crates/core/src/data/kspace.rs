//! Retrospective low-resolution simulation by central k-space cropping.
//!
//! Spectra use the orthonormal 2-D DFT. In centered coordinates the
//! frequency `k` sits at index `k + N/2`; the kept band along an axis of
//! length `N` at scale `s` is the half-open `[N/2 - N/(2s), N/2 + N/(2s))`.
//! The zero-filled reconstruction also keeps the conjugate mirror of every
//! kept bin, which makes the retained spectrum Hermitian so the inverse
//! transform of a real image is real.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

pub type C64 = Complex<f64>;

/// Orthonormal 2-D DFT of a row-major `h x w` complex array, in place.
pub fn fft2(data: &mut [C64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut column = vec![C64::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    let norm = 1.0 / ((h * w) as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= norm);
}

/// Forward orthonormal spectrum of a real `[H, W]` image, uncentered.
pub fn spectrum(img: &Tensor) -> Result<(Vec<C64>, usize, usize)> {
    let &[h, w] = img.shape() else {
        return Err(CanmError::shape(format!("image must be [H, W], got {:?}", img.shape())));
    };
    let mut d: Vec<C64> = img.data().iter().map(|&v| C64::new(v, 0.0)).collect();
    fft2(&mut d, h, w, false);
    Ok((d, h, w))
}

/// Signed frequency of DFT index `i` on an axis of length `n`.
pub fn freq(i: usize, n: usize) -> isize {
    let i = i as isize;
    let n = n as isize;
    if i < (n + 1) / 2 { i } else { i - n }
}

/// Whether signed frequency `k` lies in the kept half-open band `[-n/2, n/2)`, `n = N/s`.
pub fn in_band(k: isize, len: usize, s: usize) -> bool {
    let half = (len / s / 2) as isize;
    -half <= k && k < half
}

/// Kept bins of the zero-filled spectrum: the band plus its conjugate mirror.
pub fn keep_mask(h: usize, w: usize, s: usize) -> Vec<bool> {
    let mut m = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (ky, kx) = (freq(y, h), freq(x, w));
            let direct = in_band(ky, h, s) && in_band(kx, w, s);
            let mirror = in_band(-ky, h, s) && in_band(-kx, w, s);
            m[y * w + x] = direct || mirror;
        }
    }
    m
}

/// Unclamped outputs together with the clamped images.
#[derive(Clone, Debug)]
pub struct Degraded {
    pub lr_small: Tensor,
    pub lr_interp: Tensor,
    pub raw_small: Tensor,
    pub raw_interp: Tensor,
    /// Largest imaginary residue of the zero-filled reconstruction.
    pub max_imag: f64,
}

fn clamp01(t: &Tensor) -> Tensor {
    t.map(|v| v.clamp(0.0, 1.0))
}

pub fn kspace_degrade(img: &Tensor, s: usize) -> Result<Degraded> {
    if s != 2 && s != 4 {
        return Err(CanmError::usage(format!("scale must be 2 or 4, got {s}")));
    }
    let &[h, w] = img.shape() else {
        return Err(CanmError::shape(format!("image must be [H, W], got {:?}", img.shape())));
    };
    if h % s != 0 || w % s != 0 || !(h / s).is_multiple_of(2) || !(w / s).is_multiple_of(2) {
        return Err(CanmError::shape(format!(
            "image {h}x{w} is not divisible by scale {s} into an even-sized low-resolution grid"
        )));
    }
    let (spec, _, _) = spectrum(img)?;
    let mask = keep_mask(h, w, s);
    let mut full: Vec<C64> = spec
        .iter()
        .zip(&mask)
        .map(|(&v, &k)| if k { v } else { C64::default() })
        .collect();
    fft2(&mut full, h, w, true);
    let max_imag = full.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let raw_interp = Tensor::new(&[h, w], full.iter().map(|v| v.re).collect())?;

    let (nh, nw) = (h / s, w / s);
    let mut small = vec![C64::default(); nh * nw];
    for y in 0..nh {
        for x in 0..nw {
            let (ky, kx) = (freq(y, nh), freq(x, nw));
            let sy = ky.rem_euclid(h as isize) as usize;
            let sx = kx.rem_euclid(w as isize) as usize;
            small[y * nw + x] = spec[sy * w + sx];
        }
    }
    fft2(&mut small, nh, nw, true);
    let inv_s = 1.0 / s as f64;
    let raw_small = Tensor::new(&[nh, nw], small.iter().map(|v| v.re * inv_s).collect())?;
    Ok(Degraded {
        lr_small: clamp01(&raw_small),
        lr_interp: clamp01(&raw_interp),
        raw_small,
        raw_interp,
        max_imag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_stays_constant() {
        let d = kspace_degrade(&Tensor::full(&[16, 16], 0.3), 4).unwrap();
        assert!(d.lr_small.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(d.lr_interp.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert_eq!(d.lr_small.shape(), &[4, 4]);
    }

    #[test]
    fn lowest_frequency_cosine_passes() {
        let img = Tensor::from_fn(&[8, 16], |i| 0.5 + 0.25 * (2.0 * PI * i[1] as f64 / 16.0).cos());
        let d = kspace_degrade(&img, 4).unwrap();
        assert!(d.lr_interp.max_abs_diff(&img) < 1e-9);
    }

    #[test]
    fn band_is_half_open() {
        // n = 4: kept frequencies -2..=1, plus the mirror of -2
        let kept: Vec<isize> = (-8..8).filter(|&k| in_band(k, 16, 4)).collect();
        assert_eq!(kept, vec![-2, -1, 0, 1]);
        assert_eq!(keep_mask(16, 16, 4).iter().filter(|&&m| m).count(), 16 + 16 - 9);
    }

    #[test]
    fn reconstruction_is_real() {
        let img = Tensor::from_fn(&[16, 16], |i| ((i[0] * 13 + i[1] * 7) % 11) as f64 / 11.0);
        assert!(kspace_degrade(&img, 2).unwrap().max_imag < 1e-12);
    }

    #[test]
    fn bad_scale_or_size() {
        assert!(kspace_degrade(&Tensor::zeros(&[16, 16]), 3).is_err());
        assert!(matches!(kspace_degrade(&Tensor::zeros(&[10, 12]), 4), Err(CanmError::Shape(_))));
    }
}
