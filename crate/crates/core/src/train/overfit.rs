use indexmap::IndexMap;

use crate::autodiff::Var;
use crate::data::pair::ImagePair;
use crate::error::{CanmError, Result};
use crate::metrics::{l1_loss, ImageMetrics};
use crate::network::Network;
use crate::tensor::Tensor;

use super::adam::Adam;

/// Default harness learning rate for single-pair overfitting.
pub const HARNESS_LR: f64 = 5e-3;

#[derive(Clone, Debug)]
pub struct OverfitOptions {
    pub steps: usize,
    pub lr: f64,
    pub decay_every: usize,
}

impl Default for OverfitOptions {
    fn default() -> Self {
        OverfitOptions {
            steps: 200,
            lr: HARNESS_LR,
            decay_every: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OverfitOutcome {
    /// Loss evaluated before each update.
    pub losses: Vec<f64>,
    /// Loss of the final parameters.
    pub final_loss: f64,
    /// `lr_interp` against `hr`.
    pub baseline: ImageMetrics,
    /// Clamped network output against `hr`.
    pub trained: ImageMetrics,
    /// Clamped final output, `[H, W]`.
    pub output: Tensor,
    pub evaluations: usize,
}

/// One forward (and optionally backward) pass on a pair.
pub struct Evaluation {
    pub loss: f64,
    /// Raw network output, `[1, 1, H, W]`.
    pub output: Tensor,
    pub grads: Option<IndexMap<String, Tensor>>,
    /// Similarity evaluations summed over all matching levels.
    pub evaluations: usize,
}

/// Computes the L1 loss of `net` on `pair` and, if `grads` is set, its gradients.
pub fn evaluate(net: &Network, pair: &ImagePair, grads: bool) -> Result<Evaluation> {
    let (model, vars) = net.bind(grads)?;
    let r = Var::constant(ImagePair::batch(&pair.reference));
    let x = Var::constant(ImagePair::batch(&pair.lr_interp));
    let t = Var::constant(ImagePair::batch(&pair.hr));
    let out = model.forward(&r, &x)?;
    let loss = l1_loss(&out.output, &t)?;
    let value = loss.value().item()?;
    let g = if grads {
        loss.backward()?;
        Some(
            vars.iter()
                .map(|(n, v)| (n.clone(), v.grad().unwrap_or_else(|| Tensor::zeros(v.shape()))))
                .collect(),
        )
    } else {
        None
    };
    Ok(Evaluation {
        loss: value,
        output: out.output.value().clone(),
        grads: g,
        evaluations: out.matches.iter().flatten().map(|m| m.evaluations).sum(),
    })
}

fn diverged(step: usize) -> impl Fn(CanmError) -> CanmError {
    move |e| match e {
        CanmError::NonFinite { .. } | CanmError::DivByZero => CanmError::Divergence { step },
        e => e,
    }
}

/// Fits `net` to the single pair with Adam on the L1 loss.
pub fn overfit(net: &mut Network, pair: &ImagePair, opts: &OverfitOptions) -> Result<OverfitOutcome> {
    let baseline = ImageMetrics::measure("baseline", &pair.lr_interp, &pair.hr)?;
    let mut opt = Adam::new(opts.lr);
    opt.decay_every = opts.decay_every;
    let mut losses = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let e = evaluate(net, pair, true).map_err(diverged(step))?;
        if !e.loss.is_finite() {
            return Err(CanmError::Divergence { step });
        }
        losses.push(e.loss);
        opt.update(&mut net.params, &e.grads.expect("requested"))?;
    }
    let last = evaluate(net, pair, false).map_err(diverged(opts.steps))?;
    let final_loss = last.loss;
    if !final_loss.is_finite() {
        return Err(CanmError::Divergence { step: opts.steps });
    }
    let [h, w] = [pair.hr.shape()[0], pair.hr.shape()[1]];
    let output = last.output.reshape(&[h, w])?.map(|v| v.clamp(0.0, 1.0));
    let trained = ImageMetrics::measure("trained", &output, &pair.hr)?;
    Ok(OverfitOutcome {
        losses,
        final_loss,
        baseline,
        trained,
        output,
        evaluations: last.evaluations,
    })
}
