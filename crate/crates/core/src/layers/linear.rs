use super::init::fan_in_bound;
use super::{join, project, uniform_tensor, Bindings, Module, Role};
use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

/// Frame-wise affine map `y = x W^T + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    /// `[out, in]`.
    pub weight: Tensor,
    /// `[out]`.
    pub bias: Tensor,
}

impl LinearParams {
    pub fn init(rng: &mut Xoshiro256, input: usize, output: usize) -> Self {
        LinearParams {
            weight: uniform_tensor(rng, &[output, input], fan_in_bound(input)),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `x: [B, T, in] -> [B, T, out]`.
    pub fn forward(&self, g: &Graph, b: &Bindings, prefix: &str, x: Var) -> Result<Var> {
        let w = b.get(&join(prefix, "weight"))?;
        let bias = b.get(&join(prefix, "bias"))?;
        let y = project(g, x, w)?;
        g.add(y, bias)
    }
}

impl Module for LinearParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role)) {
        f(join(prefix, "weight"), &self.weight, Role::Trainable);
        f(join(prefix, "bias"), &self.bias, Role::Trainable);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role)) {
        f(join(prefix, "weight"), &mut self.weight, Role::Trainable);
        f(join(prefix, "bias"), &mut self.bias, Role::Trainable);
    }
}
