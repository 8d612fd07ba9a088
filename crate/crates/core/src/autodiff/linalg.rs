use super::broadcast::broadcast_shape;
use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::Var;
use crate::error::{CanmError, Result};
use crate::tensor::{strides_of, Tensor};

/// Batch bookkeeping for `[.., M, K] x [.., K, N]`.
struct MatmulPlan {
    batch: Vec<usize>,
    a_batch: Vec<usize>,
    b_batch: Vec<usize>,
    m: usize,
    k: usize,
    n: usize,
}

impl MatmulPlan {
    fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(CanmError::shape(format!(
                "matmul needs rank >= 2 operands, got {a:?} and {b:?}"
            )));
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
        if k != k2 {
            return Err(CanmError::shape(format!(
                "matmul inner dimensions differ: {a:?} x {b:?}"
            )));
        }
        let a_batch = a[..a.len() - 2].to_vec();
        let b_batch = b[..b.len() - 2].to_vec();
        let batch = broadcast_shape(&a_batch, &b_batch).map_err(|_| {
            CanmError::shape(format!("matmul batch dimensions of {a:?} and {b:?} differ"))
        })?;
        Ok(MatmulPlan {
            batch,
            a_batch,
            b_batch,
            m,
            k,
            n,
        })
    }

    /// For each output batch index, the matching batch index of a and b.
    fn pairs(&self) -> Vec<(usize, usize)> {
        let nb: usize = self.batch.iter().product();
        let r = self.batch.len();
        let map = |src: &[usize]| -> Vec<usize> {
            let pad = r - src.len();
            let st = strides_of(src);
            (0..nb)
                .map(|flat| {
                    let mut rem = flat;
                    let mut off = 0;
                    for ax in (0..r).rev() {
                        let i = rem % self.batch[ax];
                        rem /= self.batch[ax];
                        if ax >= pad && src[ax - pad] != 1 {
                            off += i * st[ax - pad];
                        }
                    }
                    off
                })
                .collect()
        };
        let (ia, ib) = (map(&self.a_batch), map(&self.b_batch));
        ia.into_iter().zip(ib).collect()
    }

    fn out_shape(&self) -> Vec<usize> {
        let mut s = self.batch.clone();
        s.extend([self.m, self.n]);
        s
    }
}

impl Var {
    /// Batched matrix product with broadcast batch dimensions.
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        let plan = MatmulPlan::new(self.shape(), other.shape())?;
        let (m, k, n) = (plan.m, plan.k, plan.n);
        let pairs = plan.pairs();
        let out_shape = plan.out_shape();
        let mut out = vec![0.0; pairs.len() * m * n];
        let (ad, bd) = (self.value().data(), other.value().data());
        for (bi, &(ia, ib)) in pairs.iter().enumerate() {
            gemm_nn(
                m,
                k,
                n,
                &ad[ia * m * k..],
                &bd[ib * k * n..],
                &mut out[bi * m * n..(bi + 1) * m * n],
            );
        }
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let (ta, tb) = (self.requires_grad(), other.requires_grad());
        Var::from_op(
            "matmul",
            Tensor::from_parts(out_shape, out),
            &[self, other],
            move |c| {
                let (a, b, g) = (c.inputs[0].data(), c.inputs[1].data(), c.grad.data());
                let ga = ta.then(|| {
                    let mut ga = vec![0.0; sa.iter().product()];
                    for (bi, &(ia, ib)) in pairs.iter().enumerate() {
                        // dA = dC * B^T
                        gemm_nt(
                            m,
                            n,
                            k,
                            &g[bi * m * n..],
                            &b[ib * k * n..],
                            &mut ga[ia * m * k..(ia + 1) * m * k],
                        );
                    }
                    Tensor::from_parts(sa.clone(), ga)
                });
                let gb = tb.then(|| {
                    let mut gb = vec![0.0; sb.iter().product()];
                    for (bi, &(ia, ib)) in pairs.iter().enumerate() {
                        // dB = A^T * dC
                        gemm_tn(
                            k,
                            m,
                            n,
                            &a[ia * m * k..],
                            &g[bi * m * n..],
                            &mut gb[ib * k * n..(ib + 1) * k * n],
                        );
                    }
                    Tensor::from_parts(sb.clone(), gb)
                });
                vec![ga, gb]
            },
        )
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Var> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(CanmError::shape(format!(
                "softmax axis {axis} out of range for {shape:?}"
            )));
        }
        let (outer, d, inner) = split_axis(&shape, axis);
        let x = self.value().data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * d * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for j in 0..d {
                    mx = mx.max(x[base + j * inner]);
                }
                let mut s = 0.0;
                for j in 0..d {
                    let e = (x[base + j * inner] - mx).exp();
                    y[base + j * inner] = e;
                    s += e;
                }
                for j in 0..d {
                    y[base + j * inner] /= s;
                }
            }
        }
        Var::from_op("softmax", Tensor::from_parts(shape, y), &[self], move |c| {
            vec![Some(softmax_backward(c.grad, c.output, outer, d, inner))]
        })
    }

    /// Softmax over the last axis restricted to entries where `mask` is true.
    ///
    /// `mask` covers the trailing `mask.len()` elements of the flattened
    /// input (typically `[rows, cols]`) and is repeated over leading axes.
    /// Masked entries receive exactly zero probability and zero gradient.
    pub fn masked_softmax_last(&self, mask: &[bool]) -> Result<Var> {
        let shape = self.shape().to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| CanmError::shape("masked softmax of a scalar"))?;
        if mask.is_empty() || !self.value().len().is_multiple_of(mask.len()) || !mask.len().is_multiple_of(d) {
            return Err(CanmError::shape(format!(
                "mask of length {} does not tile {shape:?}",
                mask.len()
            )));
        }
        let x = self.value().data();
        let rows = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let ml = mask.len();
        for r in 0..rows {
            let base = r * d;
            let mbase = base % ml;
            let valid = &mask[mbase..mbase + d];
            let mut mx = f64::NEG_INFINITY;
            for j in 0..d {
                if valid[j] {
                    mx = mx.max(x[base + j]);
                }
            }
            if mx == f64::NEG_INFINITY {
                continue;
            }
            let mut s = 0.0;
            for j in 0..d {
                if valid[j] {
                    let e = (x[base + j] - mx).exp();
                    y[base + j] = e;
                    s += e;
                }
            }
            for j in 0..d {
                if valid[j] {
                    y[base + j] /= s;
                }
            }
        }
        Var::from_op(
            "masked_softmax",
            Tensor::from_parts(shape, y),
            &[self],
            move |c| vec![Some(softmax_backward(c.grad, c.output, c.output.len() / d, d, 1))],
        )
    }
}

pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// dx = y * (g - sum(g * y))
fn softmax_backward(g: &Tensor, y: &Tensor, outer: usize, d: usize, inner: usize) -> Tensor {
    let (gd, yd) = (g.data(), y.data());
    let mut dx = vec![0.0; gd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * d * inner + i;
            let mut dot = 0.0;
            for j in 0..d {
                dot += gd[base + j * inner] * yd[base + j * inner];
            }
            for j in 0..d {
                let at = base + j * inner;
                dx[at] = yd[at] * (gd[at] - dot);
            }
        }
    }
    Tensor::from_parts(g.shape().to_vec(), dx)
}
