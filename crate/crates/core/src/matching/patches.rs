//! Dense stride-1 patch extraction with zero padding, and its normalized fold.
//!
//! Patch `i = y * W + x` is centered on pixel `(y, x)`; its entries are
//! ordered `(c, ki, kj)`.

use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub ph: usize,
    pub pw: usize,
}

impl PatchGeometry {
    pub fn new(c: usize, h: usize, w: usize, ph: usize, pw: usize) -> Result<Self> {
        if ph.is_multiple_of(2) || pw.is_multiple_of(2) {
            return Err(CanmError::config(format!("patch size ({ph}, {pw}) must be odd")));
        }
        Ok(PatchGeometry { c, h, w, ph, pw })
    }

    pub fn count(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.c * self.ph * self.pw
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls `f(patch_index, patch_entry, pixel_offset_in_channel_plane_stack)` for in-bounds entries.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (rh, rw) = ((self.ph / 2) as isize, (self.pw / 2) as isize);
        let plane = self.h * self.w;
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                for c in 0..self.c {
                    for ki in 0..self.ph {
                        let yy = y as isize + ki as isize - rh;
                        if yy < 0 || yy >= self.h as isize {
                            continue;
                        }
                        for kj in 0..self.pw {
                            let xx = x as isize + kj as isize - rw;
                            if xx < 0 || xx >= self.w as isize {
                                continue;
                            }
                            let e = (c * self.ph + ki) * self.pw + kj;
                            f(i, e, c * plane + yy as usize * self.w + xx as usize);
                        }
                    }
                }
            }
        }
    }

    /// Number of patches covering each pixel, `[H * W]`.
    fn coverage(&self) -> Vec<f64> {
        let mut cov = vec![0.0; self.h * self.w];
        let one = PatchGeometry { c: 1, ..*self };
        one.for_each(|_, _, p| cov[p] += 1.0);
        cov
    }
}

fn unfold_data(x: &[f64], b: usize, g: &PatchGeometry) -> Vec<f64> {
    let (m, l) = (g.count(), g.len());
    let mut out = vec![0.0; b * m * l];
    let img = g.c * g.h * g.w;
    for bi in 0..b {
        let (src, dst) = (&x[bi * img..(bi + 1) * img], &mut out[bi * m * l..(bi + 1) * m * l]);
        g.for_each(|i, e, p| dst[i * l + e] = src[p]);
    }
    out
}

/// Adjoint of unfold: scatter-add patch entries back to pixels.
fn fold_sum_data(p: &[f64], b: usize, g: &PatchGeometry) -> Vec<f64> {
    let (m, l) = (g.count(), g.len());
    let img = g.c * g.h * g.w;
    let mut out = vec![0.0; b * img];
    for bi in 0..b {
        let (src, dst) = (&p[bi * m * l..(bi + 1) * m * l], &mut out[bi * img..(bi + 1) * img]);
        g.for_each(|i, e, px| dst[px] += src[i * l + e]);
    }
    out
}

/// `[B, C, H, W] -> [B, H*W, C*ph*pw]`.
pub fn unfold_patches(x: &Var, ph: usize, pw: usize) -> Result<(Var, PatchGeometry)> {
    let &[b, c, h, w] = x.shape() else {
        return Err(CanmError::shape(format!("unfold needs [B, C, H, W], got {:?}", x.shape())));
    };
    let g = PatchGeometry::new(c, h, w, ph, pw)?;
    let out = Tensor::from_parts(vec![b, g.count(), g.len()], unfold_data(x.value().data(), b, &g));
    let var = Var::from_op("unfold", out, &[x], move |ctx| {
        vec![Some(Tensor::from_parts(
            vec![b, g.c, g.h, g.w],
            fold_sum_data(ctx.grad.data(), b, &g),
        ))]
    })?;
    Ok((var, g))
}

/// `[B, H*W, C*ph*pw] -> [B, C, H, W]`, averaging overlapping contributions.
pub fn fold_patches(p: &Var, g: &PatchGeometry) -> Result<Var> {
    let &[b, m, l] = p.shape() else {
        return Err(CanmError::shape(format!("fold needs [B, M, L], got {:?}", p.shape())));
    };
    if (m, l) != (g.count(), g.len()) {
        return Err(CanmError::shape(format!(
            "patch tensor {:?} does not match geometry {g:?}",
            p.shape()
        )));
    }
    let cov = g.coverage();
    let plane = g.h * g.w;
    let mut out = fold_sum_data(p.value().data(), b, g);
    for (k, v) in out.iter_mut().enumerate() {
        *v /= cov[k % plane];
    }
    let g = *g;
    Var::from_op(
        "fold",
        Tensor::from_parts(vec![b, g.c, g.h, g.w], out),
        &[p],
        move |ctx| {
            let scaled: Vec<f64> = ctx
                .grad
                .data()
                .iter()
                .enumerate()
                .map(|(k, v)| v / cov[k % plane])
                .collect();
            vec![Some(Tensor::from_parts(vec![b, m, l], unfold_data(&scaled, b, &g)))]
        },
    )
}
