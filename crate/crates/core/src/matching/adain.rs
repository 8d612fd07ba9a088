use crate::autodiff::Var;
use crate::error::{CanmError, Result};
use crate::params::{Conv, ConvShape, ParamSource};

pub const IN_EPS: f64 = 1e-8;

/// Per-sample, per-channel standardization over the spatial extent, with the
/// standard deviation guarded as `sqrt(var + eps^2)`.
pub fn instance_normalize(x: &Var) -> Result<Var> {
    let mu = x.mean_axes(&[2, 3])?;
    let xc = x.sub(&mu)?;
    let var = xc.mul(&xc)?.mean_axes(&[2, 3])?;
    xc.div(&var.add_scalar(IN_EPS * IN_EPS)?.sqrt()?)
}

/// Re-styles normalized reference features with spatial maps predicted from the degraded branch.
#[derive(Clone, Debug)]
pub struct Adain {
    pub gamma: Conv,
    pub beta: Conv,
}

impl Adain {
    pub fn declare(src: &mut dyn ParamSource, name: &str, c: usize) -> Result<Self> {
        Ok(Adain {
            gamma: Conv::declare(src, &format!("{name}.gamma"), ConvShape::same(c, c, 3))?,
            beta: Conv::declare(src, &format!("{name}.beta"), ConvShape::same(c, c, 3))?,
        })
    }

    pub fn forward(&self, x_ref: &Var, x_deg: &Var) -> Result<Var> {
        if x_ref.shape() != x_deg.shape() {
            return Err(CanmError::shape(format!(
                "adain inputs differ: {:?} vs {:?}",
                x_ref.shape(),
                x_deg.shape()
            )));
        }
        let gamma = self.gamma.forward(x_deg)?;
        let beta = self.beta.forward(x_deg)?;
        instance_normalize(x_ref)?.mul(&gamma)?.add(&beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamBinder, ParamInit};
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand(shape: &[usize], seed: u64, scale: f64, shift: f64) -> Var {
        let t = Tensor::randn(shape, scale, &mut ChaCha8Rng::seed_from_u64(seed));
        Var::constant(t.map(|v| v + shift))
    }

    fn plain_in(c: usize) -> Adain {
        let mut init = ParamInit::new(0);
        Adain::declare(&mut init, "a", c).unwrap();
        let mut store = init.into_store();
        for (name, t) in store.iter_mut() {
            let v = if name == "a.gamma.bias" { 1.0 } else { 0.0 };
            *t = Tensor::full(t.shape(), v);
        }
        Adain::declare(&mut ParamBinder::new(&store, false), "a", c).unwrap()
    }

    fn channel_stats(t: &Tensor, b: usize, c: usize) -> (f64, f64) {
        let [_, _, h, w] = t.shape() else { unreachable!() };
        let vals: Vec<f64> = (0..h * w).map(|k| t.get(&[b, c, k / w, k % w])).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        (m, v.sqrt())
    }

    #[test]
    fn unit_gamma_zero_beta_is_instance_norm() {
        let a = plain_in(3);
        let y = a.forward(&rand(&[2, 3, 6, 5], 1, 3.0, 2.0), &rand(&[2, 3, 6, 5], 2, 1.0, 0.0)).unwrap();
        for b in 0..2 {
            for c in 0..3 {
                let (m, s) = channel_stats(y.value(), b, c);
                assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-6, "{m} {s}");
            }
        }
    }

    #[test]
    fn standardized_input_is_a_fixed_point() {
        let a = plain_in(2);
        let x = instance_normalize(&rand(&[1, 2, 5, 5], 3, 1.0, 0.5)).unwrap();
        let x = Var::constant(x.value().clone());
        let y = a.forward(&x, &x).unwrap();
        assert!(y.value().max_abs_diff(x.value()) < 1e-9);
    }

    #[test]
    fn constant_channel_is_guarded() {
        let y = instance_normalize(&Var::constant(Tensor::full(&[1, 1, 3, 3], 4.0))).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 0.0));
    }
}
