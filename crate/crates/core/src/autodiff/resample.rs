use super::Var;
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

/// Fixed (parameter-free) resamplers on `[B, C, H, W]` maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resample {
    AvgPoolDown2,
    AvgPoolDown4,
    PixelShuffleUp2,
}

fn dims4(shape: &[usize], op: &str) -> Result<[usize; 4]> {
    match shape {
        &[b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(CanmError::shape(format!("{op} needs [B, C, H, W], got {shape:?}"))),
    }
}

fn pixel_shuffle_data(t: &Tensor, r: usize) -> Tensor {
    let [b, c, h, w] = dims4(t.shape(), "pixel_shuffle").unwrap();
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for bi in 0..b {
        for ci in 0..c {
            let (co, i, j) = (ci / (r * r), (ci % (r * r)) / r, ci % r);
            for y in 0..h {
                let srow = ((bi * c + ci) * h + y) * w;
                let drow = ((bi * oc + co) * oh + y * r + i) * ow;
                for x in 0..w {
                    out[drow + x * r + j] = src[srow + x];
                }
            }
        }
    }
    Tensor::from_parts(vec![b, oc, oh, ow], out)
}

fn pixel_unshuffle_data(t: &Tensor, r: usize) -> Tensor {
    let [b, oc, oh, ow] = dims4(t.shape(), "pixel_unshuffle").unwrap();
    let (c, h, w) = (oc * r * r, oh / r, ow / r);
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for bi in 0..b {
        for ci in 0..c {
            let (co, i, j) = (ci / (r * r), (ci % (r * r)) / r, ci % r);
            for y in 0..h {
                let drow = ((bi * c + ci) * h + y) * w;
                let srow = ((bi * oc + co) * oh + y * r + i) * ow;
                for x in 0..w {
                    out[drow + x] = src[srow + x * r + j];
                }
            }
        }
    }
    Tensor::from_parts(vec![b, c, h, w], out)
}

impl Var {
    pub fn resample(&self, mode: Resample) -> Result<Var> {
        match mode {
            Resample::AvgPoolDown2 => self.avg_pool(2),
            Resample::AvgPoolDown4 => self.avg_pool(4),
            Resample::PixelShuffleUp2 => self.pixel_shuffle(2),
        }
    }

    /// Mean over non-overlapping `f x f` blocks.
    pub fn avg_pool(&self, f: usize) -> Result<Var> {
        let [b, c, h, w] = dims4(self.shape(), "avg_pool")?;
        if f == 0 || h % f != 0 || w % f != 0 {
            return Err(CanmError::shape(format!(
                "avg_pool by {f} needs H and W divisible by {f}, got {h}x{w}"
            )));
        }
        let (oh, ow) = (h / f, w / f);
        let inv = 1.0 / (f * f) as f64;
        let src = self.value().data();
        let mut out = vec![0.0; b * c * oh * ow];
        for p in 0..b * c {
            for y in 0..h {
                let srow = (p * h + y) * w;
                let drow = (p * oh + y / f) * ow;
                for x in 0..w {
                    out[drow + x / f] += src[srow + x];
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        Var::from_op(
            "avg_pool",
            Tensor::from_parts(vec![b, c, oh, ow], out),
            &[self],
            move |ctx| {
                let g = ctx.grad.data();
                let mut gx = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    for y in 0..h {
                        let drow = (p * h + y) * w;
                        let srow = (p * oh + y / f) * ow;
                        for x in 0..w {
                            gx[drow + x] = g[srow + x / f] * inv;
                        }
                    }
                }
                vec![Some(Tensor::from_parts(vec![b, c, h, w], gx))]
            },
        )
    }

    /// `[B, C*r*r, H, W] -> [B, C, H*r, W*r]` with
    /// `out[c, y*r + i, x*r + j] = in[c*r*r + i*r + j, y, x]`.
    pub fn pixel_shuffle(&self, r: usize) -> Result<Var> {
        let [_, c, _, _] = dims4(self.shape(), "pixel_shuffle")?;
        if r == 0 || c % (r * r) != 0 {
            return Err(CanmError::shape(format!(
                "pixel_shuffle by {r} needs channels divisible by {}, got {c}",
                r * r
            )));
        }
        let out = pixel_shuffle_data(self.value(), r);
        Var::from_op("pixel_shuffle", out, &[self], move |ctx| {
            vec![Some(pixel_unshuffle_data(ctx.grad, r))]
        })
    }
}
