use indexmap::IndexMap;

use crate::error::{CanmError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Bias-corrected Adam with a stepwise exponential learning-rate decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplier applied once per `decay_every` updates.
    pub decay: f64,
    pub decay_every: usize,
    pub step: usize,
    m: IndexMap<String, Tensor>,
    v: IndexMap<String, Tensor>,
}

pub const BASE_LR: f64 = 1e-4;
pub const DECAY: f64 = 0.988;

impl Adam {
    pub fn new(base_lr: f64) -> Self {
        Adam {
            base_lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: DECAY,
            decay_every: 100,
            step: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    /// Learning rate used by the next update.
    pub fn lr(&self) -> f64 {
        let epochs = self.step.checked_div(self.decay_every).unwrap_or(0);
        self.base_lr * self.decay.powi(epochs as i32)
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        Some((self.m.get(name)?, self.v.get(name)?))
    }

    /// Updates every parameter of `params`; each must have a gradient.
    pub fn update(&mut self, params: &mut ParamStore, grads: &IndexMap<String, Tensor>) -> Result<()> {
        for (name, p) in params.iter() {
            match grads.get(name) {
                None => return Err(CanmError::usage(format!("no gradient for parameter `{name}`"))),
                Some(g) if g.shape() != p.shape() => {
                    return Err(CanmError::shape(format!(
                        "gradient for `{name}` has shape {:?}, parameter {:?}",
                        g.shape(),
                        p.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        let lr = self.lr();
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (name, p) in params.iter_mut() {
            let g = &grads[name];
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let (mh, vh) = (*mi / c1, *vi / c2);
                *pi -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::full(&[3], v)).unwrap();
        s
    }

    fn grads(v: f64) -> IndexMap<String, Tensor> {
        IndexMap::from([("x".to_string(), Tensor::full(&[3], v))])
    }

    #[test]
    fn first_unit_gradient_step_moves_by_lr() {
        let mut p = store(0.5);
        Adam::new(1e-3).update(&mut p, &grads(1.0)).unwrap();
        assert!(p.get("x").unwrap().data().iter().all(|v| (v - (0.5 - 1e-3)).abs() < 1e-10));
    }

    #[test]
    fn zero_gradient_or_zero_lr_is_noop() {
        let mut p = store(0.5);
        Adam::new(1e-3).update(&mut p, &grads(0.0)).unwrap();
        assert_eq!(p, store(0.5));
        Adam::new(0.0).update(&mut p, &grads(3.0)).unwrap();
        assert_eq!(p, store(0.5));
    }

    #[test]
    fn quadratic_transcript() {
        // theta <- theta - lr * mhat / (sqrt(vhat) + eps) on f = theta^2, lr 0.1
        let expect = [0.9000000005, 0.8004122286917928, 0.7015862729460303];
        let mut p = ParamStore::new();
        p.insert("t", Tensor::scalar(1.0)).unwrap();
        let mut opt = Adam::new(0.1);
        for e in expect {
            let g = 2.0 * p.get("t").unwrap().data()[0];
            opt.update(&mut p, &IndexMap::from([("t".to_string(), Tensor::scalar(g))])).unwrap();
            assert!((p.get("t").unwrap().data()[0] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let err = Adam::new(1e-3).update(&mut store(0.0), &IndexMap::new()).unwrap_err();
        assert!(err.to_string().contains("`x`"));
    }

    #[test]
    fn decay_is_stepwise() {
        let mut opt = Adam::new(1.0);
        opt.decay_every = 2;
        opt.step = 5;
        assert!((opt.lr() - DECAY * DECAY).abs() < 1e-15);
    }
}
