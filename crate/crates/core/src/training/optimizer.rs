use crate::error::{Error, Result};
use crate::layers::Module;
use crate::tensor::Tensor;

/// L2 norm over all gradient entries; NaN or infinite if any entry is.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place so their global norm is at most `clip`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor], clip: f64) -> f64 {
    let norm = global_norm(grads);
    if norm.is_finite() && norm > clip {
        let scale = clip / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// False if the gradient was non-finite and parameters were left alone.
    pub applied: bool,
}

pub trait Optimizer {
    /// Updates the trainable tensors of `params`, visited in order, with
    /// `grads` in the same order.
    fn step(&mut self, params: &mut dyn Module, grads: &[Tensor]) -> Result<StepReport>;
}

fn check_shapes(params: &dyn Module, grads: &[Tensor]) -> Result<()> {
    let mut shapes = Vec::new();
    params.visit("", &mut |_, t, role| {
        if role == crate::layers::Role::Trainable {
            shapes.push(t.shape().to_vec());
        }
    });
    if shapes.len() != grads.len() || shapes.iter().zip(grads).any(|(s, g)| s != g.shape()) {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            lhs: shapes.iter().map(|s| s.iter().product()).collect(),
            rhs: grads.iter().map(Tensor::numel).collect(),
        });
    }
    Ok(())
}

/// Plain SGD: optional clipping to global norm `clip`, then
/// `p <- p - lr * g`. A non-finite gradient leaves `params` untouched.
pub fn sgd_step(
    params: &mut dyn Module,
    grads: &[Tensor],
    lr: f64,
    clip: Option<f64>,
) -> Result<StepReport> {
    check_shapes(params, grads)?;
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Ok(StepReport {
            grad_norm: norm,
            applied: false,
        });
    }
    let scale = match clip {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    let mut it = grads.iter();
    params.for_each_trainable_mut(&mut |_, p| {
        let g = it.next().expect("checked count");
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * (gv * scale);
        }
    });
    Ok(StepReport {
        grad_norm: norm,
        applied: true,
    })
}

/// Stochastic gradient descent with optional momentum and clipping.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub clip: Option<f64>,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, clip: Option<f64>) -> Self {
        Sgd {
            lr,
            clip,
            momentum: 0.0,
            velocity: Vec::new(),
        }
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut dyn Module, grads: &[Tensor]) -> Result<StepReport> {
        if self.momentum == 0.0 {
            return sgd_step(params, grads, self.lr, self.clip);
        }
        check_shapes(params, grads)?;
        let norm = global_norm(grads);
        if !norm.is_finite() {
            return Ok(StepReport {
                grad_norm: norm,
                applied: false,
            });
        }
        let scale = match self.clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }
        for (v, g) in self.velocity.iter_mut().zip(grads) {
            for (vv, gv) in v.data_mut().iter_mut().zip(g.data()) {
                *vv = self.momentum * *vv + gv * scale;
            }
        }
        let mut it = self.velocity.iter();
        let lr = self.lr;
        params.for_each_trainable_mut(&mut |_, p| {
            let v = it.next().expect("checked count");
            for (pv, vv) in p.data_mut().iter_mut().zip(v.data()) {
                *pv -= lr * vv;
            }
        });
        Ok(StepReport {
            grad_norm: norm,
            applied: true,
        })
    }
}
