//! Scalar-loop reference implementations of the blocks, deliberately sharing
//! no code with the vectorized versions.

use serde::Serialize;

use super::{randomized, rng};
use crate::autodiff::Var;
use crate::blocks::attention::{Cab, COSINE_EPS};
use crate::blocks::window::{window_partition, window_reverse, WindowGrid};
use crate::blocks::Wab;
use crate::data::kspace::{freq, in_band, kspace_degrade, spectrum};
use crate::error::Result;
use crate::matching::{fold_patches, global_match, nbfm_match, unfold_patches, Neighborhood};
use crate::metrics::{psnr, ssim};
use crate::params::Conv;
use crate::tensor::Tensor;

pub const ORACLE_SEEDS: [u64; 5] = [11, 12, 13, 14, 15];
pub const ORACLE_TOL: f64 = 1e-10;
pub const SPECTRAL_TOL: f64 = 1e-9;
pub const ROUNDTRIP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub seed: u64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleCheck {
    pub fn new(name: impl Into<String>, seed: u64, diff: f64, tolerance: f64) -> Self {
        OracleCheck {
            name: name.into(),
            seed,
            max_abs_diff: diff,
            tolerance,
            passed: diff <= tolerance,
        }
    }
}

fn t(v: &Var) -> &Tensor {
    v.value()
}

/// 1x1 convolution by loops: `y[b, o, p] = bias[o] + sum_c w[o, c] x[b, c, p]`.
pub fn pointwise_loop(x: &Tensor, conv: &Conv) -> Tensor {
    let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let wt = t(&conv.weight);
    let o = wt.shape()[0];
    let mut y = Tensor::zeros(&[b, o, h, w]);
    for bi in 0..b {
        for oc in 0..o {
            let bias = conv.bias.as_ref().map_or(0.0, |v| t(v).data()[oc]);
            for yy in 0..h {
                for xx in 0..w {
                    let mut s = bias;
                    for ic in 0..c {
                        s += wt.get(&[oc, ic, 0, 0]) * x.get(&[bi, ic, yy, xx]);
                    }
                    y.set(&[bi, oc, yy, xx], s);
                }
            }
        }
    }
    y
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for e in v.iter_mut() {
        *e = (*e - m).exp();
        z += *e;
    }
    v.iter_mut().for_each(|e| *e /= z);
}

/// Window attention evaluated window by window, token by token.
pub fn wab_loop(x: &Tensor, wab: &Wab) -> Tensor {
    let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (q, k, v) = (
        pointwise_loop(x, &wab.to_q),
        pointwise_loop(x, &wab.to_k),
        pointwise_loop(x, &wab.to_v),
    );
    let (wh, ww) = (wab.window.min(h), wab.window.min(w));
    let oy = if wab.shift && wh < h { wh / 2 } else { 0 };
    let ox = if wab.shift && ww < w { ww / 2 } else { 0 };
    let d = c / wab.heads;
    let mut out = Tensor::zeros(&[b, c, h, w]);
    for bi in 0..b {
        for wy in 0..h / wh {
            for wx in 0..w / ww {
                // original pixel of every token in this (shifted) window
                let pix: Vec<(usize, usize)> = (0..wh * ww)
                    .map(|tk| ((wy * wh + tk / ww + oy) % h, (wx * ww + tk % ww + ox) % w))
                    .collect();
                for hd in 0..wab.heads {
                    for &(iy, ix) in &pix {
                        let mut a: Vec<f64> = pix
                            .iter()
                            .map(|&(jy, jx)| {
                                (0..d)
                                    .map(|e| q.get(&[bi, hd * d + e, iy, ix]) * k.get(&[bi, hd * d + e, jy, jx]))
                                    .sum::<f64>()
                                    / (d as f64).sqrt()
                            })
                            .collect();
                        softmax_in_place(&mut a);
                        for e in 0..d {
                            let s: f64 = pix
                                .iter()
                                .zip(&a)
                                .map(|(&(jy, jx), &aij)| aij * v.get(&[bi, hd * d + e, jy, jx]))
                                .sum();
                            out.set(&[bi, hd * d + e, iy, ix], s);
                        }
                    }
                }
            }
        }
    }
    pointwise_loop(&out, &wab.proj)
}

fn avg_pool_loop(x: &Tensor, f: usize) -> Tensor {
    let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    Tensor::from_fn(&[b, c, h / f, w / f], |i| {
        let mut s = 0.0;
        for dy in 0..f {
            for dx in 0..f {
                s += x.get(&[i[0], i[1], i[2] * f + dy, i[3] * f + dx]);
            }
        }
        s / (f * f) as f64
    })
}

/// Channel affinity `sum_p q[i, p] k[j, p]` for channels of one head.
fn channel_affinity(q: &Tensor, k: &Tensor, bi: usize, hd: usize, d: usize) -> Vec<Vec<f64>> {
    let (h, w) = (q.shape()[2], q.shape()[3]);
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut s = 0.0;
                    for y in 0..h {
                        for x in 0..w {
                            s += q.get(&[bi, hd * d + i, y, x]) * k.get(&[bi, hd * d + j, y, x]);
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Pyramid channel attention by loops.
pub fn cab_loop(x: &Tensor, cab: &Cab) -> Tensor {
    let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (x2, x4) = (avg_pool_loop(x, 2), avg_pool_loop(x, 4));
    let (q2, k2) = (pointwise_loop(&x2, &cab.to_q_half), pointwise_loop(&x2, &cab.to_k_half));
    let (q4, k4) = (pointwise_loop(&x4, &cab.to_q_quarter), pointwise_loop(&x4, &cab.to_k_quarter));
    let v = pointwise_loop(x, &cab.to_v);
    let (a1, a2) = (t(&cab.alpha1).data()[0], t(&cab.alpha2).data()[0]);
    let d = c / cab.heads;
    let mut out = Tensor::zeros(&[b, c, h, w]);
    for bi in 0..b {
        for hd in 0..cab.heads {
            let (s2, s4) = (channel_affinity(&q2, &k2, bi, hd, d), channel_affinity(&q4, &k4, bi, hd, d));
            for i in 0..d {
                let mut row: Vec<f64> = (0..d)
                    .map(|j| (a1 * s2[i][j] + a2 * s4[i][j]) / (d as f64).sqrt())
                    .collect();
                softmax_in_place(&mut row);
                for y in 0..h {
                    for xx in 0..w {
                        let s: f64 = (0..d).map(|j| row[j] * v.get(&[bi, hd * d + j, y, xx])).sum();
                        out.set(&[bi, hd * d + i, y, xx], s);
                    }
                }
            }
        }
    }
    pointwise_loop(&out, &cab.proj)
}

fn norm(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() + COSINE_EPS * COSINE_EPS).sqrt()
}

/// `(similarity, attention, matched)` for the candidate set `cands(i)` of each
/// query, where `cands` yields `(slot, reference index)` pairs.
fn match_loop(
    q: &Tensor,
    r: &Tensor,
    w: &[f64],
    slots: usize,
    cands: impl Fn(usize) -> Vec<(usize, usize)>,
) -> (Tensor, Tensor, Tensor) {
    let [b, m, l] = [q.shape()[0], q.shape()[1], q.shape()[2]];
    let mut sim = Tensor::zeros(&[b, m, slots]);
    let mut att = Tensor::zeros(&[b, m, slots]);
    let mut out = Tensor::zeros(&[b, m, l]);
    for bi in 0..b {
        let patch = |x: &Tensor, i: usize| -> Vec<f64> { (0..l).map(|e| x.get(&[bi, i, e])).collect() };
        for i in 0..m {
            let qi = patch(q, i);
            let c = cands(i);
            let s: Vec<f64> = c
                .iter()
                .map(|&(_, n)| {
                    let rn = patch(r, n);
                    qi.iter().zip(&rn).map(|(a, b)| a * b).sum::<f64>() / (norm(&qi) * norm(&rn))
                })
                .collect();
            let mut a: Vec<f64> = c.iter().zip(&s).map(|(&(j, _), &sv)| w[j] * sv).collect();
            softmax_in_place(&mut a);
            for (k, &(j, n)) in c.iter().enumerate() {
                sim.set(&[bi, i, j], s[k]);
                att.set(&[bi, i, j], a[k]);
                for e in 0..l {
                    let cur = out.get(&[bi, i, e]);
                    out.set(&[bi, i, e], cur + a[k] * r.get(&[bi, n, e]));
                }
            }
        }
    }
    (sim, att, out)
}

/// Neighborhood matching written as nested loops over `(dy, dx)`.
pub fn nbfm_loop(q: &Tensor, r: &Tensor, w: &[f64], gh: usize, gw: usize, nh: usize, nw: usize) -> (Tensor, Tensor, Tensor) {
    let (rh, rw) = ((nh / 2) as isize, (nw / 2) as isize);
    match_loop(q, r, w, nh * nw, |i| {
        let (qy, qx) = ((i / gw) as isize, (i % gw) as isize);
        let mut c = Vec::new();
        for dy in -rh..=rh {
            for dx in -rw..=rw {
                let (y, x) = (qy + dy, qx + dx);
                if y >= 0 && x >= 0 && y < gh as isize && x < gw as isize {
                    c.push((((dy + rh) * nw as isize + dx + rw) as usize, y as usize * gw + x as usize));
                }
            }
        }
        c
    })
}

/// Dense matching: every reference patch is a candidate, weighted by its relative offset.
pub fn global_loop(q: &Tensor, r: &Tensor, w: &[f64], gh: usize, gw: usize) -> (Tensor, Tensor, Tensor) {
    let (nh, nw) = (2 * gh - 1, 2 * gw - 1);
    match_loop(q, r, w, nh * nw, |i| {
        let (qy, qx) = (i / gw, i % gw);
        (0..gh * gw)
            .map(|n| {
                let (py, px) = (n / gw, n % gw);
                let slot = (py + gh - 1 - qy) * nw + (px + gw - 1 - qx);
                (slot, n)
            })
            .collect()
    })
}

/// SSIM with the 2-D window applied directly at every valid position.
pub fn ssim_loop(a: &Tensor, b: &Tensor, data_range: f64) -> f64 {
    let (h, w) = (a.shape()[0], a.shape()[1]);
    let g1: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let z: f64 = g1.iter().sum::<f64>().powi(2);
    let (c1, c2) = ((0.01 * data_range).powi(2), (0.03 * data_range).powi(2));
    let mut total = 0.0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = g1[i] * g1[j] / z;
                    let (p, q) = (a.get(&[y + i, x + j]), b.get(&[y + i, x + j]));
                    mx += g * p;
                    my += g * q;
                    sxx += g * p * p;
                    syy += g * q * q;
                    sxy += g * p * q;
                }
            }
            let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    total / ((h - 10) * (w - 10)) as f64
}

pub fn psnr_loop(a: &Tensor, b: &Tensor) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        s += (x - y) * (x - y);
    }
    -10.0 * (s / a.len() as f64).log10()
}

fn rand_input(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut rng(seed))
}

pub fn wab_checks() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for (k, &seed) in ORACLE_SEEDS.iter().enumerate() {
        // alternate unshifted / shifted, and include a window that spans the map
        let (shift, hw) = (k % 2 == 1, if k == 4 { 4 } else { 8 });
        let (wab, _) = randomized(seed, 0.5, |s| Wab::declare(s, "wab", 4, 2, 4, shift))?;
        let x = rand_input(&[2, 4, hw, hw], seed);
        let y = wab.forward(&Var::constant(x.clone()))?;
        out.push(OracleCheck::new("wab", seed, y.value().max_abs_diff(&wab_loop(&x, &wab)), ORACLE_TOL));
    }
    Ok(out)
}

pub fn cab_checks() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for &seed in &ORACLE_SEEDS {
        let (cab, _) = randomized(seed, 0.5, |s| Cab::declare(s, "cab", 4, 2))?;
        let x = rand_input(&[2, 4, 8, 8], seed);
        let y = cab.forward(&Var::constant(x.clone()))?;
        out.push(OracleCheck::new("cab", seed, y.value().max_abs_diff(&cab_loop(&x, &cab)), ORACLE_TOL));
    }
    Ok(out)
}

fn diff3(a: &crate::matching::MatchResult, b: &(Tensor, Tensor, Tensor)) -> f64 {
    t(&a.similarity)
        .max_abs_diff(&b.0)
        .max(t(&a.attention).max_abs_diff(&b.1))
        .max(t(&a.matched).max_abs_diff(&b.2))
}

pub fn nbfm_checks() -> Result<Vec<OracleCheck>> {
    let (gh, gw) = (5, 6);
    let mut out = Vec::new();
    for (k, &seed) in ORACLE_SEEDS.iter().enumerate() {
        let (nh, nw) = [(3, 3), (5, 5), (3, 5), (1, 3), (9, 11)][k];
        let nb = Neighborhood::new(gh, gw, nh, nw)?;
        let mut g = rng(seed);
        let q = Tensor::randn(&[2, gh * gw, 7], 1.0, &mut g);
        let r = Tensor::randn(&[2, gh * gw, 7], 1.0, &mut g);
        let w = Tensor::randn(&[nh * nw], 2.0, &mut g);
        let m = nbfm_match(&Var::constant(q.clone()), &Var::constant(r.clone()), &nb, &Var::constant(w.clone()))?;
        let oracle = nbfm_loop(&q, &r, w.data(), gh, gw, nh, nw);
        out.push(OracleCheck::new(format!("nbfm_{nh}x{nw}"), seed, diff3(&m, &oracle), ORACLE_TOL));
    }
    Ok(out)
}

/// Dense matching against its loop, and against neighborhood matching with a covering window.
pub fn gfm_checks() -> Result<Vec<OracleCheck>> {
    let (gh, gw) = (4, 5);
    let mut out = Vec::new();
    for &seed in &ORACLE_SEEDS {
        let mut g = rng(seed);
        let q = Tensor::randn(&[1, gh * gw, 5], 1.0, &mut g);
        let r = Tensor::randn(&[1, gh * gw, 5], 1.0, &mut g);
        let w = Tensor::randn(&[(2 * gh - 1) * (2 * gw - 1)], 2.0, &mut g);
        let (qv, rv, wv) = (Var::constant(q.clone()), Var::constant(r.clone()), Var::constant(w.clone()));
        let dense = global_match(&qv, &rv, gh, gw, &wv)?;
        out.push(OracleCheck::new("gfm", seed, diff3(&dense, &global_loop(&q, &r, w.data(), gh, gw)), ORACLE_TOL));
        let nb = nbfm_match(&qv, &rv, &Neighborhood::new(gh, gw, 2 * gh - 1, 2 * gw - 1)?, &wv)?;
        let same = t(&nb.matched).max_abs_diff(t(&dense.matched)).max(t(&nb.attention).max_abs_diff(t(&dense.attention)));
        out.push(OracleCheck::new("gfm_eq_covering_nbfm", seed, same, ROUNDTRIP_TOL));
    }
    Ok(out)
}

/// Largest deviation between the spectra of the pre-clamp reconstruction and
/// the original on the kept central band.
pub fn band_error(hr: &Tensor, s: usize) -> Result<f64> {
    let d = kspace_degrade(hr, s)?;
    let (a, h, w) = spectrum(hr)?;
    let (b, _, _) = spectrum(&d.raw_interp)?;
    let mut worst: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            if in_band(freq(y, h), h, s) && in_band(freq(x, w), w, s) {
                worst = worst.max((a[y * w + x] - b[y * w + x]).norm());
            }
        }
    }
    Ok(worst)
}

pub fn spectral_checks() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for s in [2, 4] {
        for n in [16, 64, 256] {
            let seed = (s * 1000 + n) as u64;
            let hr = Tensor::rand_uniform(&[n, n], 0.0, 1.0, &mut rng(seed));
            out.push(OracleCheck::new(format!("spectral_s{s}_{n}"), seed, band_error(&hr, s)?, SPECTRAL_TOL));
        }
    }
    Ok(out)
}

/// Unfold/fold and window partition/reverse roundtrips.
pub fn fold_checks() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for &seed in &ORACLE_SEEDS {
        let x = Var::constant(rand_input(&[2, 3, 8, 12], seed));
        for (ph, pw) in [(3, 3), (1, 5)] {
            let (p, g) = unfold_patches(&x, ph, pw)?;
            let back = fold_patches(&p, &g)?;
            out.push(OracleCheck::new(format!("fold_{ph}x{pw}"), seed, back.value().max_abs_diff(x.value()), ROUNDTRIP_TOL));
        }
        for shift in [false, true] {
            let g = WindowGrid::new(8, 12, 4, shift)?;
            let back = window_reverse(&window_partition(&x, &g)?, &g)?;
            let name = if shift { "window_shifted" } else { "window" };
            out.push(OracleCheck::new(name, seed, back.value().max_abs_diff(x.value()), ROUNDTRIP_TOL));
        }
    }
    Ok(out)
}

pub fn metric_checks() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    let a = Tensor::full(&[16, 16], 0.3);
    let b = Tensor::full(&[16, 16], 0.4);
    out.push(OracleCheck::new("psnr_uniform_0.1", 0, (psnr(&a, &b, 1.0)? - 20.0).abs(), ORACLE_TOL));
    for &seed in &ORACLE_SEEDS {
        let mut g = rng(seed);
        let x = Tensor::rand_uniform(&[20, 23], 0.0, 1.0, &mut g);
        let noise = Tensor::randn(&[20, 23], 0.1, &mut g);
        let y = x.zip_map(&noise, |p, n| (p + n).clamp(0.0, 1.0))?;
        out.push(OracleCheck::new("psnr", seed, (psnr(&x, &y, 1.0)? - psnr_loop(&x, &y)).abs(), ORACLE_TOL));
        out.push(OracleCheck::new("ssim", seed, (ssim(&x, &y, 1.0)? - ssim_loop(&x, &y, 1.0)).abs(), ORACLE_TOL));
        out.push(OracleCheck::new("ssim_self", seed, (ssim(&x, &x, 1.0)? - 1.0).abs(), 1e-12));
    }
    Ok(out)
}
