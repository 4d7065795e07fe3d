use super::{frame_mask, join, seq_shape, Bindings, Module, Role};
use crate::autodiff::{BatchNormMode, BatchStats, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-feature batch normalization with running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
    pub mode: BnMode,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            gamma: Tensor::full(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], 1.0),
            momentum: 0.1,
            eps: 1e-5,
            mode: BnMode::Train,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.numel()
    }

    /// Blends batch statistics into the running estimates with `momentum`.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &s) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * s;
        }
        for (r, &s) in self.running_var.data_mut().iter_mut().zip(&stats.var_unbiased) {
            *r = (1.0 - m) * *r + m * s;
        }
    }

    /// Normalizes `z: [B, T, F]`, with statistics taken over valid frames only.
    pub fn apply(
        &self,
        g: &Graph,
        b: &Bindings,
        prefix: &str,
        z: Var,
        lengths: &[usize],
    ) -> Result<(Var, Option<BatchStats>)> {
        let (batch, t_max, f) = seq_shape(g, z)?;
        if f != self.features() {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                lhs: vec![batch, t_max, f],
                rhs: self.gamma.shape().to_vec(),
            });
        }
        let gamma = b.get(&join(prefix, "gamma"))?;
        let beta = b.get(&join(prefix, "beta"))?;
        let mask = frame_mask(lengths, t_max);
        let flat = g.reshape(z, &[batch * t_max, f])?;
        let mode = match self.mode {
            BnMode::Train => BatchNormMode::Train { eps: self.eps },
            BnMode::Eval => BatchNormMode::Eval {
                mean: self.running_mean.data(),
                var: self.running_var.data(),
                eps: self.eps,
            },
        };
        let (y, stats) = g.batch_norm(flat, gamma, beta, Some(&mask), mode)?;
        Ok((g.reshape(y, &[batch, t_max, f])?, stats))
    }
}

impl Module for BatchNormState {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role)) {
        f(join(prefix, "gamma"), &self.gamma, Role::Trainable);
        f(join(prefix, "beta"), &self.beta, Role::Trainable);
        f(join(prefix, "running_mean"), &self.running_mean, Role::Buffer);
        f(join(prefix, "running_var"), &self.running_var, Role::Buffer);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role)) {
        f(join(prefix, "gamma"), &mut self.gamma, Role::Trainable);
        f(join(prefix, "beta"), &mut self.beta, Role::Trainable);
        f(join(prefix, "running_mean"), &mut self.running_mean, Role::Buffer);
        f(join(prefix, "running_var"), &mut self.running_var, Role::Buffer);
    }
}

/// Applies `state` to `z` on a fresh binding of its own parameters.
pub fn batchnorm_apply(
    g: &Graph,
    state: &BatchNormState,
    z: Var,
    lengths: &[usize],
) -> Result<(Var, Option<BatchStats>)> {
    let b = Bindings::new(g, state);
    state.apply(g, &b, "", z, lengths)
}
