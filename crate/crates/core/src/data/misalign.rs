//! Rigid misalignment: rotation about the image center followed by translation.

use serde::{Deserialize, Serialize};

use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

pub const MAX_SHIFT: f64 = 4.0;
pub const MAX_ANGLE: f64 = 3.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MisalignSpec {
    /// Horizontal shift in pixels (positive moves content right).
    pub tx: f64,
    /// Vertical shift in pixels (positive moves content down).
    pub ty: f64,
    /// Rotation in degrees.
    pub theta: f64,
}

impl MisalignSpec {
    pub fn new(tx: f64, ty: f64, theta: f64) -> Result<Self> {
        let s = MisalignSpec { tx, ty, theta };
        s.validate()?;
        Ok(s)
    }

    /// Parses `tx,ty,deg`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [tx, ty, th] = parts.as_slice() else {
            return Err(CanmError::usage(format!("misalignment must be `tx,ty,deg`, got `{s}`")));
        };
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| CanmError::usage(format!("`{v}` is not a number")))
        };
        MisalignSpec::new(num(tx)?, num(ty)?, num(th)?)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64, lim: f64| v.is_finite() && v.abs() <= lim;
        if !ok(self.tx, MAX_SHIFT) || !ok(self.ty, MAX_SHIFT) {
            return Err(CanmError::usage(format!(
                "translation ({}, {}) outside [-{MAX_SHIFT}, {MAX_SHIFT}] pixels",
                self.tx, self.ty
            )));
        }
        if !ok(self.theta, MAX_ANGLE) {
            return Err(CanmError::usage(format!(
                "rotation {} outside [-{MAX_ANGLE}, {MAX_ANGLE}] degrees",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.tx == 0.0 && self.ty == 0.0 && self.theta == 0.0
    }
}

/// Bilinear sample at `(y, x)` with edge replication.
fn sample(img: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let at = |yy: usize, xx: usize| img[yy * w + xx];
    (at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx) * (1.0 - fy) + (at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx) * fy
}

/// Applies `spec` to an `[H, W]` image. The zero spec returns the input unchanged.
pub fn misalign(img: &Tensor, spec: &MisalignSpec) -> Result<Tensor> {
    spec.validate()?;
    let &[h, w] = img.shape() else {
        return Err(CanmError::shape(format!("image must be [H, W], got {:?}", img.shape())));
    };
    if spec.is_identity() {
        return Ok(img.clone());
    }
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = spec.theta.to_radians().sin_cos();
    let src = img.data();
    // inverse map: p = R^-1 (q - c - t) + c
    Tensor::new(
        &[h, w],
        (0..h * w)
            .map(|k| {
                let qy = (k / w) as f64 - cy - spec.ty;
                let qx = (k % w) as f64 - cx - spec.tx;
                let py = -sin * qx + cos * qy + cy;
                let px = cos * qx + sin * qy + cx;
                sample(src, h, w, py, px)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spec_is_identity() {
        let img = Tensor::from_fn(&[5, 6], |i| (i[0] * 6 + i[1]) as f64 * 0.1);
        assert_eq!(misalign(&img, &MisalignSpec::default()).unwrap(), img);
    }

    #[test]
    fn integer_translation_is_exact() {
        let mut img = Tensor::zeros(&[16, 16]);
        img.set(&[7, 5], 1.0);
        let out = misalign(&img, &MisalignSpec::new(4.0, 0.0, 0.0).unwrap()).unwrap();
        let mut expect = Tensor::zeros(&[16, 16]);
        expect.set(&[7, 9], 1.0);
        assert_eq!(out, expect);
    }

    #[test]
    fn ranges_are_enforced() {
        assert!(MisalignSpec::new(4.5, 0.0, 0.0).is_err());
        assert!(MisalignSpec::new(0.0, 0.0, -3.5).is_err());
        assert!(MisalignSpec::parse("4,0,3").is_ok());
        assert!(MisalignSpec::parse("4,0").is_err());
    }

    #[test]
    fn edges_replicate() {
        let img = Tensor::from_fn(&[4, 4], |i| i[1] as f64);
        let out = misalign(&img, &MisalignSpec::new(2.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(out.get(&[0, 0]), 0.0);
        assert_eq!(out.get(&[0, 1]), 0.0);
        assert_eq!(out.get(&[0, 3]), 1.0);
    }
}
