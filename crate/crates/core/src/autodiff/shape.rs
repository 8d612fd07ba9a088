use super::Var;
use crate::error::{CanmError, Result};
use crate::tensor::{strides_of, Tensor};

fn permute_data(t: &Tensor, perm: &[usize]) -> Tensor {
    let shape = t.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides_of(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    let r = out_shape.len();
    if r == 0 {
        return t.clone();
    }
    let data = t.data();
    let last = out_shape[r - 1];
    let ls = src_strides[r - 1];
    let outer: usize = out_shape[..r - 1].iter().product();
    let mut idx = vec![0usize; r - 1];
    let mut off = 0usize;
    for _ in 0..outer {
        for j in 0..last {
            out.push(data[off + j * ls]);
        }
        for ax in (0..r - 1).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Tensor::from_parts(out_shape, out)
}

/// Roll along one axis: `out[i] = in[(i - shift) mod n]`.
fn roll_data(t: &Tensor, axis: usize, shift: isize) -> Tensor {
    let shape = t.shape();
    let n = shape[axis] as isize;
    let s = shift.rem_euclid(n) as usize;
    if s == 0 {
        return t.clone();
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let d = shape[axis];
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..d {
            let from = (i + d - s) % d;
            let dst = (o * d + i) * inner;
            let srco = (o * d + from) * inner;
            out[dst..dst + inner].copy_from_slice(&src[srco..srco + inner]);
        }
    }
    Tensor::from_parts(shape.to_vec(), out)
}

impl Var {
    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let out = self.value().reshape(shape).map_err(|_| {
            CanmError::shape(format!("cannot reshape {:?} to {shape:?}", self.shape()))
        })?;
        let orig = self.shape().to_vec();
        Var::from_op("reshape", out, &[self], move |c| {
            vec![Some(Tensor::from_parts(orig.clone(), c.grad.data().to_vec()))]
        })
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Var> {
        let r = self.shape().len();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(CanmError::shape(format!(
                "invalid permutation {perm:?} for rank {r}"
            )));
        }
        let out = permute_data(self.value(), perm);
        let mut inverse = vec![0; r];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Var::from_op("permute", out, &[self], move |c| {
            vec![Some(permute_data(c.grad, &inverse))]
        })
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Result<Var> {
        let r = self.shape().len();
        if r < 2 {
            return Err(CanmError::shape("transpose needs rank >= 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(&perm)
    }

    pub fn concat(parts: &[&Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| CanmError::shape("concat of zero tensors"))?;
        let base = first.shape().to_vec();
        if axis >= base.len() {
            return Err(CanmError::shape(format!("concat axis {axis} out of range")));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(CanmError::shape(format!(
                    "concat along {axis} of {:?} and {s:?}",
                    base
                )));
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &d) in parts.iter().zip(&sizes) {
                let src = p.value().data();
                out.extend_from_slice(&src[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Var::from_op("concat", Tensor::from_parts(shape, out), parts, move |c| {
            let g = c.grad.data();
            let mut grads: Vec<Vec<f64>> = sizes
                .iter()
                .map(|&d| Vec::with_capacity(outer * d * inner))
                .collect();
            for o in 0..outer {
                let mut at = o * total * inner;
                for (gp, &d) in grads.iter_mut().zip(&sizes) {
                    gp.extend_from_slice(&g[at..at + d * inner]);
                    at += d * inner;
                }
            }
            grads
                .into_iter()
                .zip(&c.inputs)
                .map(|(gd, inp)| Some(Tensor::from_parts(inp.shape().to_vec(), gd)))
                .collect()
        })
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(CanmError::shape(format!(
                "narrow({axis}, {start}, {len}) out of range for {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let d = shape[axis];
        let src = self.value().data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let b = (o * d + start) * inner;
            out.extend_from_slice(&src[b..b + len * inner]);
        }
        let mut oshape = shape.clone();
        oshape[axis] = len;
        Var::from_op("narrow", Tensor::from_parts(oshape, out), &[self], move |c| {
            let g = c.grad.data();
            let mut gx = vec![0.0; shape.iter().product()];
            for o in 0..outer {
                let b = (o * d + start) * inner;
                gx[b..b + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(Tensor::from_parts(shape.clone(), gx))]
        })
    }

    /// Splits `axis` into `n` equal chunks.
    pub fn chunk(&self, n: usize, axis: usize) -> Result<Vec<Var>> {
        let d = *self
            .shape()
            .get(axis)
            .ok_or_else(|| CanmError::shape(format!("chunk axis {axis} out of range")))?;
        if n == 0 || d % n != 0 {
            return Err(CanmError::shape(format!(
                "cannot split axis of size {d} into {n} chunks"
            )));
        }
        (0..n).map(|i| self.narrow(axis, i * d / n, d / n)).collect()
    }

    /// Cyclic shift: `out[.., i, ..] = in[.., (i - shift) mod n, ..]` along `axis`.
    pub fn roll(&self, axis: usize, shift: isize) -> Result<Var> {
        if axis >= self.shape().len() {
            return Err(CanmError::shape(format!("roll axis {axis} out of range")));
        }
        let out = roll_data(self.value(), axis, shift);
        Var::from_op("roll", out, &[self], move |c| {
            vec![Some(roll_data(c.grad, axis, -shift))]
        })
    }
}
