//! NumPy-style broadcasting and its adjoint (sum back to the input shape).

use crate::error::{CanmError, Result};
use crate::tensor::{strides_of, Tensor};

pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(CanmError::shape(format!(
                    "shapes {a:?} and {b:?} are not broadcastable"
                )))
            }
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside `out` (rank-padded on the left, 0 on
/// broadcast axes).
fn view_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let pad = out.len() - shape.len();
    let natural = strides_of(shape);
    (0..out.len())
        .map(|i| {
            if i < pad || shape[i - pad] == 1 {
                0
            } else {
                natural[i - pad]
            }
        })
        .collect()
}

/// Calls `f(out_offset, a_offset, b_offset, run)` over contiguous runs of the
/// last output axis. Run strides along the last axis are returned separately.
fn for_each_run(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let r = out.len();
    if r == 0 {
        f(0, 0, 0);
        return;
    }
    let last = out[r - 1];
    let outer: usize = out[..r - 1].iter().product();
    let mut idx = vec![0usize; r - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    for o in 0..outer {
        f(o * last, oa, ob);
        for ax in (0..r - 1).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

pub(crate) fn binary_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::from_parts(a.shape().to_vec(), data));
    }
    let out = broadcast_shape(a.shape(), b.shape())?;
    let n: usize = out.iter().product();
    if b.len() == 1 {
        let y = b.data()[0];
        let data = if a.len() == n {
            a.data().iter().map(|&x| f(x, y)).collect()
        } else {
            return Ok(broadcast_to(a, &out)?.map(|x| f(x, y)));
        };
        return Ok(Tensor::from_parts(out, data));
    }
    if a.len() == 1 && b.len() == n {
        let x = a.data()[0];
        return Ok(Tensor::from_parts(out, b.data().iter().map(|&y| f(x, y)).collect()));
    }
    let sa = view_strides(a.shape(), &out);
    let sb = view_strides(b.shape(), &out);
    let last = *out.last().unwrap();
    let (la, lb) = (sa[out.len() - 1], sb[out.len() - 1]);
    let mut data = vec![0.0; n];
    let (ad, bd) = (a.data(), b.data());
    for_each_run(&out, &sa, &sb, |o, oa, ob| {
        let dst = &mut data[o..o + last];
        for (j, d) in dst.iter_mut().enumerate() {
            *d = f(ad[oa + j * la], bd[ob + j * lb]);
        }
    });
    Ok(Tensor::from_parts(out, data))
}

pub(crate) fn broadcast_to(t: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let out = broadcast_shape(t.shape(), shape)?;
    if out != shape {
        return Err(CanmError::shape(format!(
            "cannot broadcast {:?} to {shape:?}",
            t.shape()
        )));
    }
    if t.shape() == shape {
        return Ok(t.clone());
    }
    let st = view_strides(t.shape(), shape);
    let zeros = vec![0; shape.len()];
    let last = *shape.last().unwrap();
    let lt = st[shape.len() - 1];
    let mut data = vec![0.0; shape.iter().product()];
    let td = t.data();
    for_each_run(shape, &st, &zeros, |o, ot, _| {
        for j in 0..last {
            data[o + j] = td[ot + j * lt];
        }
    });
    Ok(Tensor::from_parts(shape.to_vec(), data))
}

/// Sums `g` over the axes along which `shape` was broadcast to `g.shape()`.
pub(crate) fn sum_to_shape(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let n: usize = shape.iter().product();
    if n == 1 {
        return Tensor::from_parts(shape.to_vec(), vec![g.sum()]);
    }
    let out = g.shape();
    let st = view_strides(shape, out);
    let zeros = vec![0; out.len()];
    let last = *out.last().unwrap();
    let lt = st[out.len() - 1];
    let mut data = vec![0.0; n];
    let gd = g.data();
    for_each_run(out, &st, &zeros, |o, ot, _| {
        for j in 0..last {
            data[ot + j * lt] += gd[o + j];
        }
    });
    Tensor::from_parts(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(broadcast_shape(&[3, 1, 1], &[2, 3, 4, 5]).unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(broadcast_shape(&[], &[2]).unwrap(), vec![2]);
        assert!(broadcast_shape(&[3], &[4]).is_err());
    }

    #[test]
    fn channel_broadcast_and_reduce() {
        let a = Tensor::from_fn(&[2, 2, 3], |i| (i[0] * 6 + i[1] * 3 + i[2]) as f64);
        let g = Tensor::new(&[2, 1, 1], vec![10.0, 100.0]).unwrap();
        let c = binary_map(&a, &g, |x, y| x * y).unwrap();
        assert_eq!(c.get(&[1, 1, 2]), 11.0 * 100.0);
        assert_eq!(c.get(&[0, 1, 0]), 3.0 * 10.0);
        let s = sum_to_shape(&a, &[2, 1, 1]);
        assert_eq!(s.data(), &[15.0, 51.0]);
        let s = sum_to_shape(&a, &[3]);
        assert_eq!(s.data(), &[0. + 3. + 6. + 9., 1. + 4. + 7. + 10., 2. + 5. + 8. + 11.]);
    }

    #[test]
    fn broadcast_to_repeats() {
        let t = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(broadcast_to(&t, &[3, 2]).unwrap().data(), &[1., 2., 1., 2., 1., 2.]);
    }
}
