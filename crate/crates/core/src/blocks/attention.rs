//! Window self-attention and channel self-attention.

use super::window::{window_partition, window_reverse, WindowGrid};
use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::params::{Conv, ConvShape, Init, ParamSource};

/// Spatial self-attention inside (optionally shifted) windows.
#[derive(Clone, Debug)]
pub struct Wab {
    pub to_q: Conv,
    pub to_k: Conv,
    pub to_v: Conv,
    pub proj: Conv,
    pub heads: usize,
    pub window: usize,
    pub shift: bool,
}

fn check_heads(c: usize, heads: usize, what: &str) -> Result<usize> {
    if heads == 0 || !c.is_multiple_of(heads) {
        return Err(CanmError::config(format!(
            "{what}: {c} channels are not divisible by {heads} heads"
        )));
    }
    Ok(c / heads)
}

fn dims4(x: &Var, op: &str) -> Result<[usize; 4]> {
    match *x.shape() {
        [b, c, h, w] => Ok([b, c, h, w]),
        ref s => Err(CanmError::shape(format!("{op} needs [B, C, H, W], got {s:?}"))),
    }
}

impl Wab {
    pub fn declare(
        src: &mut dyn ParamSource,
        name: &str,
        c: usize,
        heads: usize,
        window: usize,
        shift: bool,
    ) -> Result<Self> {
        check_heads(c, heads, name)?;
        let pw = ConvShape::pointwise(c, c);
        Ok(Wab {
            to_q: Conv::declare(src, &format!("{name}.to_q"), pw)?,
            to_k: Conv::declare(src, &format!("{name}.to_k"), pw)?,
            to_v: Conv::declare(src, &format!("{name}.to_v"), pw)?,
            proj: Conv::declare(src, &format!("{name}.proj"), pw)?,
            heads,
            window,
            shift,
        })
    }

    /// Per-window attention `[B * nW, heads, T, T]` and values `[B * nW, heads, T, d]`.
    fn attend(&self, x: &Var) -> Result<(Var, Var, WindowGrid)> {
        let [_, c, h, w] = dims4(x, "wab")?;
        let d = check_heads(c, self.heads, "wab")?;
        let grid = WindowGrid::new(h, w, self.window, self.shift)?;
        let xw = window_partition(x, &grid)?;
        let n = xw.shape()[0];
        let t = grid.tokens();
        // q, v: [n, heads, T, d]; k: [n, heads, d, T]
        let split = |v: &Var| v.reshape(&[n, self.heads, d, t]);
        let q = split(&self.to_q.forward(&xw)?)?
            .transpose_last()?
            .scale(1.0 / (d as f64).sqrt())?;
        let k = split(&self.to_k.forward(&xw)?)?;
        let v = split(&self.to_v.forward(&xw)?)?.transpose_last()?;
        Ok((q.matmul(&k)?.softmax(3)?, v, grid))
    }

    /// Row-stochastic token attention of every window.
    pub fn attention(&self, x: &Var) -> Result<Var> {
        Ok(self.attend(x)?.0)
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let c = x.shape()[1];
        let (attn, v, grid) = self.attend(x)?;
        let out = attn
            .matmul(&v)?
            .transpose_last()?
            .reshape(&[v.shape()[0], c, grid.wh, grid.ww])?;
        window_reverse(&self.proj.forward(&out)?, &grid)
    }
}

/// Channel attention whose queries and keys come from 2x and 4x downsampled maps.
#[derive(Clone, Debug)]
pub struct Cab {
    pub to_v: Conv,
    pub to_q_half: Conv,
    pub to_k_half: Conv,
    pub to_q_quarter: Conv,
    pub to_k_quarter: Conv,
    pub alpha1: Var,
    pub alpha2: Var,
    pub proj: Conv,
    pub heads: usize,
}

impl Cab {
    pub fn declare(src: &mut dyn ParamSource, name: &str, c: usize, heads: usize) -> Result<Self> {
        check_heads(c, heads, name)?;
        let pw = ConvShape::pointwise(c, c);
        let conv = |src: &mut dyn ParamSource, role: &str| Conv::declare(src, &format!("{name}.{role}"), pw);
        Ok(Cab {
            to_v: conv(src, "to_v")?,
            to_q_half: conv(src, "to_q_half")?,
            to_k_half: conv(src, "to_k_half")?,
            to_q_quarter: conv(src, "to_q_quarter")?,
            to_k_quarter: conv(src, "to_k_quarter")?,
            alpha1: src.param(&format!("{name}.alpha1"), &[1], Init::Ones)?,
            alpha2: src.param(&format!("{name}.alpha2"), &[1], Init::Ones)?,
            proj: conv(src, "proj")?,
            heads,
        })
    }

    /// Mixed `[B, heads, d, d]` affinity and the full-scale value map.
    fn affinity(&self, x: &Var) -> Result<(Var, Var)> {
        let [b, c, h, w] = dims4(x, "cab")?;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(CanmError::shape(format!(
                "cab needs H and W divisible by 4, got {h}x{w}"
            )));
        }
        let d = check_heads(c, self.heads, "cab")?;
        let heads = self.heads;
        let flat = |v: &Var| {
            let n = v.shape()[2] * v.shape()[3];
            v.reshape(&[b, heads, d, n])
        };
        let x2 = x.avg_pool(2)?;
        let x4 = x.avg_pool(4)?;
        let a_half = flat(&self.to_q_half.forward(&x2)?)?
            .matmul(&flat(&self.to_k_half.forward(&x2)?)?.transpose_last()?)?;
        let a_quarter = flat(&self.to_q_quarter.forward(&x4)?)?
            .matmul(&flat(&self.to_k_quarter.forward(&x4)?)?.transpose_last()?)?;
        let mixed = a_half
            .mul(&self.alpha1)?
            .add(&a_quarter.mul(&self.alpha2)?)?
            .scale(1.0 / (d as f64).sqrt())?;
        Ok((mixed.softmax(3)?, flat(&self.to_v.forward(x)?)?))
    }

    /// Row-stochastic channel attention, `[B, heads, d, d]`.
    pub fn attention(&self, x: &Var) -> Result<Var> {
        Ok(self.affinity(x)?.0)
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let (attn, v) = self.affinity(x)?;
        let out = attn.matmul(&v)?.reshape(x.shape())?;
        self.proj.forward(&out)
    }
}

/// Single-scale channel attention over L2-normalized queries and keys,
/// scaled by a learnable temperature.
#[derive(Clone, Debug)]
pub struct FullChannelAttn {
    pub to_q: Conv,
    pub to_k: Conv,
    pub to_v: Conv,
    pub temperature: Var,
    pub proj: Conv,
    pub heads: usize,
}

pub const COSINE_EPS: f64 = 1e-8;

/// `x / sqrt(sum(x^2, last) + eps^2)`
pub fn l2_normalize_last(x: &Var) -> Result<Var> {
    let axis = x.shape().len() - 1;
    let n = x.mul(x)?.sum_axes(&[axis])?.add_scalar(COSINE_EPS * COSINE_EPS)?.sqrt()?;
    x.div(&n)
}

impl FullChannelAttn {
    pub fn declare(src: &mut dyn ParamSource, name: &str, c: usize, heads: usize) -> Result<Self> {
        check_heads(c, heads, name)?;
        let pw = ConvShape::pointwise(c, c);
        Ok(FullChannelAttn {
            to_q: Conv::declare(src, &format!("{name}.to_q"), pw)?,
            to_k: Conv::declare(src, &format!("{name}.to_k"), pw)?,
            to_v: Conv::declare(src, &format!("{name}.to_v"), pw)?,
            temperature: src.param(&format!("{name}.temperature"), &[1], Init::Ones)?,
            proj: Conv::declare(src, &format!("{name}.proj"), pw)?,
            heads,
        })
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let [b, c, h, w] = dims4(x, "channel attention")?;
        let d = check_heads(c, self.heads, "channel attention")?;
        let flat = |v: Var| v.reshape(&[b, self.heads, d, h * w]);
        let q = l2_normalize_last(&flat(self.to_q.forward(x)?)?)?;
        let k = l2_normalize_last(&flat(self.to_k.forward(x)?)?)?;
        let v = flat(self.to_v.forward(x)?)?;
        let attn = q.matmul(&k.transpose_last()?)?.mul(&self.temperature)?.softmax(3)?;
        self.proj.forward(&attn.matmul(&v)?.reshape(x.shape())?)
    }
}
