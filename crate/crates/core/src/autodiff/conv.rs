//! 2-D cross-correlation (no kernel flip), via im2col + GEMM.

use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::Var;
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl Conv2dSpec {
    pub fn same(k: usize) -> Self {
        Conv2dSpec {
            padding: k / 2,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
    groups: usize,
}

impl Geometry {
    fn cg(&self) -> usize {
        self.c / self.groups
    }
    fn og(&self) -> usize {
        self.o / self.groups
    }
    fn col_rows(&self) -> usize {
        self.cg() * self.kh * self.kw
    }
    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let n = g.col_cols();
    for c in 0..g.cg() {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * n;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut cols[row + oy * g.ow..row + (oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, dx: &mut [f64]) {
    let n = g.col_cols();
    for c in 0..g.cg() {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * n;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dx[base + ix as usize] += cols[row + oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn geometry(x: &[usize], w: &[usize], spec: Conv2dSpec) -> Result<Geometry> {
    let (&[b, c, h, wd], &[o, cg, kh, kw]) = (x, w) else {
        return Err(CanmError::shape(format!(
            "conv2d needs x [B, C, H, W] and w [O, C/g, kh, kw], got {x:?} and {w:?}"
        )));
    };
    let g = spec.groups;
    if g == 0 || c % g != 0 || o % g != 0 || cg != c / g {
        return Err(CanmError::shape(format!(
            "conv2d channel/group mismatch: input {x:?}, weight {w:?}, groups {g}"
        )));
    }
    if spec.stride == 0 || h + 2 * spec.padding < kh || wd + 2 * spec.padding < kw {
        return Err(CanmError::shape(format!(
            "conv2d kernel {kh}x{kw} does not fit input {h}x{wd} with padding {}",
            spec.padding
        )));
    }
    Ok(Geometry {
        b,
        c,
        h,
        w: wd,
        o,
        kh,
        kw,
        oh: (h + 2 * spec.padding - kh) / spec.stride + 1,
        ow: (wd + 2 * spec.padding - kw) / spec.stride + 1,
        stride: spec.stride,
        pad: spec.padding,
        groups: g,
    })
}

impl Var {
    /// Cross-correlation of `x: [B, C, H, W]` with `weight: [O, C/g, kh, kw]`.
    pub fn conv2d(&self, weight: &Var, bias: Option<&Var>, spec: Conv2dSpec) -> Result<Var> {
        let g = geometry(self.shape(), weight.shape(), spec)?;
        if let Some(bv) = bias {
            if bv.shape() != [g.o] {
                return Err(CanmError::shape(format!(
                    "conv2d bias must be [{}], got {:?}",
                    g.o,
                    bv.shape()
                )));
            }
        }
        let (x, wt) = (self.value().data(), weight.value().data());
        let (rows, ncol) = (g.col_rows(), g.col_cols());
        let (cg, og) = (g.cg(), g.og());
        let mut out = vec![0.0; g.b * g.o * ncol];
        let mut cols = if g.pointwise() { Vec::new() } else { vec![0.0; rows * ncol] };
        for bi in 0..g.b {
            for gi in 0..g.groups {
                let xg = &x[(bi * g.c + gi * cg) * g.h * g.w..];
                let src: &[f64] = if g.pointwise() {
                    &xg[..rows * ncol]
                } else {
                    im2col(xg, &g, &mut cols);
                    &cols
                };
                let dst = &mut out[(bi * g.o + gi * og) * ncol..(bi * g.o + (gi + 1) * og) * ncol];
                gemm_nn(og, rows, ncol, &wt[gi * og * rows..], src, dst);
            }
        }
        if let Some(bv) = bias {
            let bd = bv.value().data();
            for bi in 0..g.b {
                for oc in 0..g.o {
                    let s = &mut out[(bi * g.o + oc) * ncol..(bi * g.o + oc + 1) * ncol];
                    s.iter_mut().for_each(|v| *v += bd[oc]);
                }
            }
        }
        let value = Tensor::from_parts(vec![g.b, g.o, g.oh, g.ow], out);
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let (tx, tw) = (self.requires_grad(), weight.requires_grad());
        let tb = bias.map(|b| b.requires_grad());
        Var::from_op("conv2d", value, &parents, move |ctx| {
            let (x, wt, gout) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad.data());
            let mut gx = tx.then(|| vec![0.0; g.b * g.c * g.h * g.w]);
            let mut gw = tw.then(|| vec![0.0; g.o * rows]);
            let mut cols = vec![0.0; rows * ncol];
            for bi in 0..g.b {
                for gi in 0..g.groups {
                    let gslice = &gout[(bi * g.o + gi * og) * ncol..];
                    if let Some(gw) = gw.as_mut() {
                        let xg = &x[(bi * g.c + gi * cg) * g.h * g.w..];
                        let src: &[f64] = if g.pointwise() {
                            &xg[..rows * ncol]
                        } else {
                            im2col(xg, &g, &mut cols);
                            &cols
                        };
                        // dW_g += dOut_g * cols^T
                        gemm_nt(og, ncol, rows, gslice, src, &mut gw[gi * og * rows..(gi + 1) * og * rows]);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dxg = &mut gx[(bi * g.c + gi * cg) * g.h * g.w..(bi * g.c + (gi + 1) * cg) * g.h * g.w];
                        let wg = &wt[gi * og * rows..];
                        // dcols = W_g^T * dOut_g
                        if g.pointwise() {
                            gemm_tn(rows, og, ncol, wg, gslice, dxg);
                        } else {
                            cols.iter_mut().for_each(|v| *v = 0.0);
                            gemm_tn(rows, og, ncol, wg, gslice, &mut cols);
                            col2im(&cols, &g, dxg);
                        }
                    }
                }
            }
            let gb = tb.map(|track| {
                track.then(|| {
                    let mut gb = vec![0.0; g.o];
                    for bi in 0..g.b {
                        for (oc, acc) in gb.iter_mut().enumerate() {
                            *acc += gout[(bi * g.o + oc) * ncol..(bi * g.o + oc + 1) * ncol]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                    Tensor::from_parts(vec![g.o], gb)
                })
            });
            let mut grads = vec![
                gx.map(|d| Tensor::from_parts(vec![g.b, g.c, g.h, g.w], d)),
                gw.map(|d| Tensor::from_parts(vec![g.o, cg, g.kh, g.kw], d)),
            ];
            if let Some(gb) = gb {
                grads.push(gb);
            }
            grads
        })
    }
}
