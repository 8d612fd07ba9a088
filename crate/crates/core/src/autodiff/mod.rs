//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation on a [`Var`] produces a new node that remembers its
//! parents and an adjoint rule, but only when at least one parent requires a
//! gradient; untracked computations keep no history and free intermediates
//! as soon as they go out of scope. The graph is built from `Rc` links, so a
//! graph is confined to the thread that built it, while the [`Tensor`]
//! values themselves can move freely between threads.
//!
//! Leaf gradients accumulate (sum) across fan-out and across repeated
//! `backward` calls; they are only cleared by [`Var::zero_grad`].
//!
//! In verification mode (the default) every op output is checked for
//! NaN/Inf and division by an exact zero is rejected.

mod broadcast;
mod conv;
mod elementwise;
pub(crate) mod kernels;
mod linalg;
mod reduce;
mod resample;
mod shape;

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

pub use broadcast::broadcast_shape;
pub use conv::Conv2dSpec;
pub use resample::Resample;

use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

thread_local! {
    static VERIFY: Cell<bool> = const { Cell::new(true) };
}

/// Enables or disables per-op finiteness and zero-division checks on this
/// thread. Returns the previous setting.
pub fn set_verification(enabled: bool) -> bool {
    VERIFY.with(|v| v.replace(enabled))
}

pub fn verification_enabled() -> bool {
    VERIFY.with(|v| v.get())
}

/// Inputs handed to an adjoint rule.
pub(crate) struct BackwardCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
}

type BackwardFn = Box<dyn Fn(&BackwardCtx) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    op: &'static str,
    requires_grad: bool,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    grad: RefCell<Option<Tensor>>,
}

/// A tensor participating in a (possibly empty) computation graph.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("op", &self.0.op)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    /// A leaf node. Leaves with `requires_grad` collect gradients.
    pub fn leaf(value: Tensor, requires_grad: bool) -> Var {
        Var(Rc::new(Node {
            value,
            op: "leaf",
            requires_grad,
            parents: Vec::new(),
            backward: None,
            grad: RefCell::new(None),
        }))
    }

    pub fn param(value: Tensor) -> Var {
        Var::leaf(value, true)
    }

    pub fn constant(value: Tensor) -> Var {
        Var::leaf(value, false)
    }

    pub fn scalar(v: f64) -> Var {
        Var::constant(Tensor::scalar(v))
    }

    /// Records an op output. `backward` returns one optional gradient per parent.
    pub(crate) fn from_op(
        op: &'static str,
        value: Tensor,
        parents: &[&Var],
        backward: impl Fn(&BackwardCtx) -> Vec<Option<Tensor>> + 'static,
    ) -> Result<Var> {
        if verification_enabled() && !value.all_finite() {
            return Err(CanmError::NonFinite { op });
        }
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let (parents, backward): (Vec<Var>, Option<BackwardFn>) = if requires_grad {
            (
                parents.iter().map(|&p| p.clone()).collect(),
                Some(Box::new(backward)),
            )
        } else {
            (Vec::new(), None)
        };
        Ok(Var(Rc::new(Node {
            value,
            op,
            requires_grad,
            parents,
            backward,
            grad: RefCell::new(None),
        })))
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn op_name(&self) -> &'static str {
        self.0.op
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none() && self.0.parents.is_empty()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Tensor> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// A new untracked leaf sharing this node's value.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub fn ptr_eq(&self, other: &Var) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Propagates d(self)/d(leaf) into every reachable leaf that requires a
    /// gradient. `self` must be a tracked one-element tensor.
    pub fn backward(&self) -> Result<()> {
        if !self.requires_grad() {
            return Err(CanmError::usage(
                "backward called on a tensor that does not require grad",
            ));
        }
        if self.value().len() != 1 {
            return Err(CanmError::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        let order = self.topological_order();
        let mut grads: HashMap<*const Node, Tensor> = HashMap::new();
        grads.insert(
            Rc::as_ptr(&self.0),
            Tensor::ones(self.value().shape()),
        );
        for var in order.iter().rev() {
            let key = Rc::as_ptr(&var.0);
            let Some(g) = grads.remove(&key) else {
                continue;
            };
            let node = &var.0;
            match &node.backward {
                None => {
                    let mut slot = node.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.add_assign(&g),
                        None => *slot = Some(g),
                    }
                }
                Some(rule) => {
                    let ctx = BackwardCtx {
                        grad: &g,
                        inputs: node.parents.iter().map(|p| p.value()).collect(),
                        output: &node.value,
                    };
                    let parent_grads = rule(&ctx);
                    debug_assert_eq!(parent_grads.len(), node.parents.len(), "op {}", node.op);
                    for (parent, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.shape(), parent.shape(), "adjoint of {}", node.op);
                        grads
                            .entry(Rc::as_ptr(&parent.0))
                            .and_modify(|acc| acc.add_assign(&pg))
                            .or_insert(pg);
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over tracked nodes; each node appears exactly once.
    fn topological_order(&self) -> Vec<Var> {
        let mut order = Vec::new();
        let mut visited: HashSet<*const Node> = HashSet::new();
        let mut stack: Vec<(Var, usize)> = vec![(self.clone(), 0)];
        visited.insert(Rc::as_ptr(&self.0));
        while let Some((var, next)) = stack.pop() {
            if next < var.0.parents.len() {
                let child = var.0.parents[next].clone();
                stack.push((var, next + 1));
                if child.requires_grad() && visited.insert(Rc::as_ptr(&child.0)) {
                    stack.push((child, 0));
                }
            } else {
                order.push(var);
            }
        }
        order
    }
}

pub(crate) fn check_divisor(t: &Tensor) -> Result<()> {
    if verification_enabled() && t.data().contains(&0.0) {
        return Err(CanmError::DivByZero);
    }
    Ok(())
}
