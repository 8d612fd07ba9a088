//! Dense GEMM kernels on row-major slices. All accumulate into `c`.
//!
//! Large products are split over output rows with rayon; each output element
//! is still summed by one thread in a fixed order, so results do not depend
//! on the thread count.

use rayon::prelude::*;

const PAR_THRESHOLD: usize = 1 << 18;

fn rows_per_task(m: usize, work: usize) -> usize {
    if work < PAR_THRESHOLD {
        m.max(1)
    } else {
        (m / (4 * rayon::current_num_threads())).max(1)
    }
}

/// `c[m x n] += a[m x k] * b[k x n]`
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let rows = rows_per_task(m, m * k * n);
    let body = |(ci, c_rows): (usize, &mut [f64])| {
        for (r, c_row) in c_rows.chunks_exact_mut(n).enumerate() {
            let i = ci * rows + r;
            let a_row = &a[i * k..(i + 1) * k];
            for (p, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    };
    let c = &mut c[..m * n];
    if rows >= m {
        body((0, c));
    } else {
        c.par_chunks_mut(rows * n).enumerate().for_each(body);
    }
}

/// `c[m x n] += a[m x k] * b[n x k]^T`
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    let rows = rows_per_task(m, m * k * n);
    let body = |(ci, c_rows): (usize, &mut [f64])| {
        for (r, c_row) in c_rows.chunks_exact_mut(n).enumerate() {
            let i = ci * rows + r;
            let a_row = &a[i * k..(i + 1) * k];
            for (j, cv) in c_row.iter_mut().enumerate() {
                let b_row = &b[j * k..(j + 1) * k];
                let mut s = 0.0;
                for (&x, &y) in a_row.iter().zip(b_row) {
                    s += x * y;
                }
                *cv += s;
            }
        }
    };
    let c = &mut c[..m * n];
    if rows >= m {
        body((0, c));
    } else {
        c.par_chunks_mut(rows * n).enumerate().for_each(body);
    }
}

/// `c[m x n] += a[k x m]^T * b[k x n]`
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    let rows = rows_per_task(m, m * k * n);
    let body = |(ci, c_rows): (usize, &mut [f64])| {
        for (r, c_row) in c_rows.chunks_exact_mut(n).enumerate() {
            let i = ci * rows + r;
            for p in 0..k {
                let av = a[p * m + i];
                if av == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    };
    let c = &mut c[..m * n];
    if rows >= m {
        body((0, c));
    } else {
        c.par_chunks_mut(rows * n).enumerate().for_each(body);
    }
}
