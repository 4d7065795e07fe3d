//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its forward
//! value and enough saved context to apply its backward rule. Nodes are only
//! ever appended, so node indices form a topological order and
//! [`Graph::backward`] simply walks the tape in reverse.
//!
//! The spike threshold is the one non-smooth primitive. Its forward pass is a
//! Heaviside step and its backward pass is the boxcar pseudo-derivative
//! described by [`SurrogateSpec`].

mod gradcheck;
pub(crate) mod kernels;
mod ops;

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_many};
pub use ops::{BatchNormMode, BatchStats, CtcLoss};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Forward threshold and backward boxcar of the spike nonlinearity.
///
/// Forward: `s = 1` if `u >= threshold`, else `0`.
/// Backward: `ds/du = slope` if `|u - threshold| <= half_width`, else `0`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSpec {
    pub threshold: f64,
    pub half_width: f64,
    pub slope: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec {
            threshold: 1.0,
            half_width: 0.5,
            slope: 0.5,
        }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || !(self.slope >= 0.0) || !self.threshold.is_finite() {
            return Err(Error::invalid(format!(
                "surrogate requires half_width > 0, slope >= 0 and finite threshold: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, u: f64) -> f64 {
        if u >= self.threshold {
            1.0
        } else {
            0.0
        }
    }

    /// Pseudo-derivative used in place of the step's derivative.
    pub fn derivative(&self, u: f64) -> f64 {
        if (u - self.threshold).abs() <= self.half_width {
            self.slope
        } else {
            0.0
        }
    }
}

pub(crate) struct Node {
    value: Tensor,
    op: ops::Op,
    requires_grad: bool,
}

/// A gradient tape. Single-threaded; build one per forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Vec<f64>>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&self, value: Tensor) -> Var {
        self.push_node(value, ops::Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push_node(value, ops::Op::Leaf, false)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let nodes = self.nodes.borrow();
        let t = &nodes[v.0].value;
        assert_eq!(t.numel(), 1, "scalar() on shape {:?}", t.shape());
        t.data()[0]
    }

    /// Gradient accumulated by the last [`Graph::backward`], if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let grads = self.grads.borrow();
        let g = grads.get(v.0)?.as_ref()?;
        let shape = self.nodes.borrow()[v.0].value.shape().to_vec();
        Some(Tensor::from_parts(shape, g.clone()))
    }

    /// Gradient of `v`, or zeros of the right shape if nothing flowed into it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .unwrap_or_else(|| Tensor::zeros(self.nodes.borrow()[v.0].value.shape()))
    }

    fn push_node(&self, value: Tensor, op: ops::Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn push(&self, value: Tensor, op: ops::Op) -> Var {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|p| nodes[p.0].requires_grad)
        };
        self.push_node(value, op, requires_grad)
    }

    /// Back-propagates from a scalar `loss`, replacing any previous gradients.
    ///
    /// Gradients from multiple uses of a node are summed. The walk is strictly
    /// sequential, so repeated calls produce bitwise-identical results.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::NonScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if node.requires_grad {
                ops::backward_node(&nodes, &node.op, &node.value, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (node, g) in nodes.iter().zip(grads.iter_mut()) {
            if !node.requires_grad {
                *g = None;
            }
        }
        *self.grads.borrow_mut() = grads;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
