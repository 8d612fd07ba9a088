//! Central finite-difference gradient checking.
//!
//! For each checked coordinate the recorded adjoint `a` is compared with
//! `n = (f(x + h) - f(x - h)) / 2h`. The relative error is
//!
//! ```text
//! |a - n| / max(|a|, |n|, floor),   floor = max(1e-3 * max_k |n_k|, 1e-12)
//! ```
//!
//! The floor keeps coordinates whose gradient is negligible next to the
//! largest one from being judged on pure rounding noise.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Clone, Debug)]
pub enum Coords {
    All,
    /// At most `n` coordinates per input, drawn without replacement.
    Sample { n: usize, seed: u64 },
    /// Exactly these `(input, coordinate)` pairs.
    Explicit(Vec<(usize, usize)>),
}

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub coords: Coords,
    /// Test fixture: corrupt the analytic gradient of this input before comparing.
    pub corrupt_input: Option<usize>,
}

impl GradcheckOptions {
    pub fn new(tolerance: f64) -> Self {
        GradcheckOptions {
            step: DEFAULT_STEP,
            tolerance,
            coords: Coords::All,
            corrupt_input: None,
        }
    }

    pub fn sample(mut self, n: usize, seed: u64) -> Self {
        self.coords = Coords::Sample { n, seed };
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoordFailure {
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub failing: Vec<CoordFailure>,
}

/// Checks the gradient of the scalar `f(inputs)` with respect to every input.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], opts: &GradcheckOptions) -> Result<GradReport>
where
    F: Fn(&[Var]) -> Result<Var>,
{
    let leaves: Vec<Var> = inputs.iter().map(|t| Var::param(t.clone())).collect();
    let out = f(&leaves)?;
    out.backward()?;
    let mut analytic: Vec<Tensor> = leaves
        .iter()
        .zip(inputs)
        .map(|(l, t)| l.grad().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    if let Some(i) = opts.corrupt_input {
        if let Some(g) = analytic.get_mut(i) {
            g.data_mut()[0] += 1e-3 * (1.0 + g.data()[0].abs());
        }
    }

    let eval = |shifted: &[Tensor]| -> Result<f64> {
        let vars: Vec<Var> = shifted.iter().map(|t| Var::constant(t.clone())).collect();
        f(&vars)?.value().item()
    };

    let mut pairs = Vec::new();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match &opts.coords {
            Coords::All => (0..input.len()).collect(),
            Coords::Explicit(list) => list.iter().filter(|p| p.0 == i).map(|p| p.1).collect(),
            &Coords::Sample { n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37));
                let mut v = sample(&mut rng, input.len(), n.min(input.len())).into_vec();
                v.sort_unstable();
                v
            }
        };
        for k in coords {
            let x0 = input.data()[k];
            let wrap = |e| CanmError::Gradcheck {
                input: i,
                coord: k,
                source: Box::new(e),
            };
            work[i].data_mut()[k] = x0 + opts.step;
            let fp = eval(&work).map_err(wrap)?;
            work[i].data_mut()[k] = x0 - opts.step;
            let fm = eval(&work).map_err(wrap)?;
            work[i].data_mut()[k] = x0;
            let numeric = (fp - fm) / (2.0 * opts.step);
            pairs.push((i, k, analytic[i].data()[k], numeric));
        }
    }
    Ok(summarize(&pairs, opts.tolerance))
}

/// Builds a report from `(input, coord, analytic, numeric)` tuples.
pub fn summarize(pairs: &[(usize, usize, f64, f64)], tolerance: f64) -> GradReport {
    let scale = pairs.iter().map(|p| p.3.abs()).fold(0.0, f64::max);
    let floor = (1e-3 * scale).max(1e-12);
    let mut report = GradReport {
        checked: pairs.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        tolerance,
        passed: true,
        failing: Vec::new(),
    };
    for &(input, coord, a, n) in pairs {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        if rel.is_nan() || rel >= tolerance {
            report.passed = false;
            report.failing.push(CoordFailure {
                input,
                coord,
                analytic: a,
                numeric: n,
                rel_error: rel,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_agrees_exactly() {
        let x = Tensor::from_fn(&[3, 2], |i| i[0] as f64 - i[1] as f64);
        let r = gradcheck(|v| v[0].sum(), &[x], &GradcheckOptions::new(1e-9)).unwrap();
        assert!(r.passed);
        assert!(r.max_rel_error < 1e-10, "{}", r.max_rel_error);
    }

    #[test]
    fn square_sum_at_ones() {
        let x = Tensor::ones(&[5]);
        let r = gradcheck(|v| v[0].mul(&v[0])?.sum(), &[x], &GradcheckOptions::new(1e-9)).unwrap();
        assert!(r.passed && r.max_rel_error < 1e-9, "{}", r.max_rel_error);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let x = Tensor::ones(&[2]);
        let mut opts = GradcheckOptions::new(1e-6);
        opts.corrupt_input = Some(0);
        let r = gradcheck(|v| v[0].mul(&v[0])?.sum(), &[x], &opts).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failing[0].coord, 0);
    }

    #[test]
    fn explicit_coordinates_only() {
        let x = Tensor::ones(&[4]);
        let mut opts = GradcheckOptions::new(1e-9);
        opts.coords = Coords::Explicit(vec![(0, 2), (1, 0)]);
        let r = gradcheck(|v| v[0].mul(&v[1])?.sum(), &[x.clone(), x], &opts).unwrap();
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn evaluation_errors_carry_coordinates() {
        // sqrt of a value pushed through zero produces a NaN on the minus side.
        let x = Tensor::new(&[2], vec![1.0, 0.00005]).unwrap();
        let err = gradcheck(|v| v[0].sqrt()?.sum(), &[x], &GradcheckOptions::new(1e-6)).unwrap_err();
        assert!(matches!(err, CanmError::Gradcheck { input: 0, coord: 1, .. }), "{err}");
    }
}
