//! Sparse query-to-neighbor kernels over a patch grid.
//!
//! Offsets `j` enumerate `(dy, dx)` in row-major order, `dy` outermost,
//! both ascending from `-(n/2)` to `n/2`.

use std::sync::Arc;

use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

const INVALID: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct Neighborhood {
    pub gh: usize,
    pub gw: usize,
    pub nh: usize,
    pub nw: usize,
    /// `[M * J]` reference index per (query, offset), `INVALID` when off-grid.
    table: Arc<Vec<u32>>,
    mask: Arc<Vec<bool>>,
}

impl Neighborhood {
    pub fn new(gh: usize, gw: usize, nh: usize, nw: usize) -> Result<Self> {
        if nh.is_multiple_of(2) || nw.is_multiple_of(2) {
            return Err(CanmError::config(format!(
                "neighborhood ({nh}, {nw}) must have odd sides"
            )));
        }
        let (rh, rw) = ((nh / 2) as isize, (nw / 2) as isize);
        let mut table = Vec::with_capacity(gh * gw * nh * nw);
        for qy in 0..gh as isize {
            for qx in 0..gw as isize {
                for dy in -rh..=rh {
                    for dx in -rw..=rw {
                        let (y, x) = (qy + dy, qx + dx);
                        table.push(if y < 0 || x < 0 || y >= gh as isize || x >= gw as isize {
                            INVALID
                        } else {
                            (y as usize * gw + x as usize) as u32
                        });
                    }
                }
            }
        }
        let mask = table.iter().map(|&t| t != INVALID).collect();
        Ok(Neighborhood {
            gh,
            gw,
            nh,
            nw,
            table: Arc::new(table),
            mask: Arc::new(mask),
        })
    }

    /// The smallest neighborhood that reaches every grid position from every query.
    pub fn covering(gh: usize, gw: usize) -> Result<Self> {
        Neighborhood::new(gh, gw, 2 * gh - 1, 2 * gw - 1)
    }

    pub fn queries(&self) -> usize {
        self.gh * self.gw
    }

    pub fn offsets(&self) -> usize {
        self.nh * self.nw
    }

    pub fn center(&self) -> usize {
        self.offsets() / 2
    }

    /// `(dy, dx)` of offset `j`.
    pub fn offset(&self, j: usize) -> (isize, isize) {
        (
            (j / self.nw) as isize - (self.nh / 2) as isize,
            (j % self.nw) as isize - (self.nw / 2) as isize,
        )
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Reference index for query `i`, offset `j`.
    pub fn neighbor(&self, i: usize, j: usize) -> Option<usize> {
        let t = self.table[i * self.offsets() + j];
        (t != INVALID).then_some(t as usize)
    }

    pub fn valid_pairs(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn check(&self, v: &Var, what: &str) -> Result<(usize, usize)> {
        match *v.shape() {
            [b, m, l] if m == self.queries() => Ok((b, l)),
            ref s => Err(CanmError::shape(format!(
                "{what} must be [B, {}, L], got {s:?}",
                self.queries()
            ))),
        }
    }

    /// `S[b, i, j] = <q[b, i], r[b, nbr(i, j)]>`, zero at invalid offsets.
    pub fn dot(&self, q: &Var, r: &Var) -> Result<Var> {
        let (b, l) = self.check(q, "query patches")?;
        if r.shape() != q.shape() {
            return Err(CanmError::shape(format!(
                "query {:?} and reference {:?} patches differ",
                q.shape(),
                r.shape()
            )));
        }
        let (m, jn) = (self.queries(), self.offsets());
        let table = Arc::clone(&self.table);
        let (qd, rd) = (q.value().data(), r.value().data());
        let mut out = vec![0.0; b * m * jn];
        for bi in 0..b {
            for i in 0..m {
                let qi = &qd[(bi * m + i) * l..(bi * m + i + 1) * l];
                for j in 0..jn {
                    let t = table[i * jn + j];
                    if t != INVALID {
                        let rj = &rd[(bi * m + t as usize) * l..(bi * m + t as usize + 1) * l];
                        out[(bi * m + i) * jn + j] = qi.iter().zip(rj).map(|(a, b)| a * b).sum();
                    }
                }
            }
        }
        let (tq, tr) = (q.requires_grad(), r.requires_grad());
        Var::from_op(
            "neighbor_dot",
            Tensor::from_parts(vec![b, m, jn], out),
            &[q, r],
            move |ctx| {
                let (qd, rd, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad.data());
                let mut gq = tq.then(|| vec![0.0; b * m * l]);
                let mut gr = tr.then(|| vec![0.0; b * m * l]);
                for bi in 0..b {
                    for i in 0..m {
                        let qo = (bi * m + i) * l;
                        for j in 0..jn {
                            let t = table[i * jn + j];
                            let gij = g[(bi * m + i) * jn + j];
                            if t == INVALID || gij == 0.0 {
                                continue;
                            }
                            let ro = (bi * m + t as usize) * l;
                            if let Some(gq) = gq.as_mut() {
                                for e in 0..l {
                                    gq[qo + e] += gij * rd[ro + e];
                                }
                            }
                            if let Some(gr) = gr.as_mut() {
                                for e in 0..l {
                                    gr[ro + e] += gij * qd[qo + e];
                                }
                            }
                        }
                    }
                }
                let t = |v: Vec<f64>| Tensor::from_parts(vec![b, m, l], v);
                vec![gq.map(t), gr.map(t)]
            },
        )
    }

    /// `out[b, i] = sum_j attn[b, i, j] * v[b, nbr(i, j)]` over valid offsets.
    pub fn aggregate(&self, attn: &Var, v: &Var) -> Result<Var> {
        let (b, l) = self.check(v, "value patches")?;
        let (m, jn) = (self.queries(), self.offsets());
        if attn.shape() != [b, m, jn] {
            return Err(CanmError::shape(format!(
                "attention must be [{b}, {m}, {jn}], got {:?}",
                attn.shape()
            )));
        }
        let table = Arc::clone(&self.table);
        let (ad, vd) = (attn.value().data(), v.value().data());
        let mut out = vec![0.0; b * m * l];
        for bi in 0..b {
            for i in 0..m {
                let oi = &mut out[(bi * m + i) * l..(bi * m + i + 1) * l];
                for j in 0..jn {
                    let t = table[i * jn + j];
                    let a = ad[(bi * m + i) * jn + j];
                    if t != INVALID {
                        let vj = &vd[(bi * m + t as usize) * l..(bi * m + t as usize + 1) * l];
                        for (o, x) in oi.iter_mut().zip(vj) {
                            *o += a * x;
                        }
                    }
                }
            }
        }
        let (ta, tv) = (attn.requires_grad(), v.requires_grad());
        Var::from_op(
            "neighbor_aggregate",
            Tensor::from_parts(vec![b, m, l], out),
            &[attn, v],
            move |ctx| {
                let (ad, vd, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad.data());
                let mut ga = ta.then(|| vec![0.0; b * m * jn]);
                let mut gv = tv.then(|| vec![0.0; b * m * l]);
                for bi in 0..b {
                    for i in 0..m {
                        let go = (bi * m + i) * l;
                        for j in 0..jn {
                            let t = table[i * jn + j];
                            if t == INVALID {
                                continue;
                            }
                            let vo = (bi * m + t as usize) * l;
                            if let Some(ga) = ga.as_mut() {
                                ga[(bi * m + i) * jn + j] =
                                    (0..l).map(|e| g[go + e] * vd[vo + e]).sum();
                            }
                            if let Some(gv) = gv.as_mut() {
                                let a = ad[(bi * m + i) * jn + j];
                                for e in 0..l {
                                    gv[vo + e] += a * g[go + e];
                                }
                            }
                        }
                    }
                }
                vec![
                    ga.map(|v| Tensor::from_parts(vec![b, m, jn], v)),
                    gv.map(|v| Tensor::from_parts(vec![b, m, l], v)),
                ]
            },
        )
    }
}
