//! Strided 1-D convolution over time with a ReLU, used to shorten sequences
//! before the recurrent stack.

use super::init::fan_in_bound;
use super::{check_lengths, join, seq_shape, uniform_tensor, Bindings, Module, Role};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec {
            channels: 64,
            kernel: 3,
            stride: 2,
        }
    }
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "conv channels, kernel and stride must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `floor((frames - kernel) / stride) + 1`, or `None` if `frames < kernel`.
pub fn conv_output_length(frames: usize, kernel: usize, stride: usize) -> Option<usize> {
    (frames >= kernel && kernel > 0 && stride > 0).then(|| (frames - kernel) / stride + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    /// `[channels, kernel * input]`; column `j * input + f` weights frame
    /// offset `j`, feature `f`.
    pub weight: Tensor,
    pub bias: Tensor,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvParams {
    pub fn init(rng: &mut Xoshiro256, spec: &ConvSpec, input: usize) -> Self {
        let fan_in = spec.kernel * input;
        ConvParams {
            weight: uniform_tensor(rng, &[spec.channels, fan_in], fan_in_bound(fan_in)),
            bias: Tensor::zeros(&[spec.channels]),
            kernel: spec.kernel,
            stride: spec.stride,
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(
        &self,
        g: &Graph,
        b: &Bindings,
        prefix: &str,
        x: Var,
        lengths: &[usize],
    ) -> Result<(Var, Vec<usize>)> {
        let (batch, t_max, features) = seq_shape(g, x)?;
        if features * self.kernel != self.weight.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "conv_front_end",
                lhs: vec![batch, t_max, features],
                rhs: self.weight.shape().to_vec(),
            });
        }
        check_lengths(lengths, batch, t_max)?;
        let out_lengths = lengths
            .iter()
            .map(|&len| {
                conv_output_length(len, self.kernel, self.stride).ok_or_else(|| {
                    Error::invalid(format!(
                        "sequence of {len} frames is shorter than conv kernel {}",
                        self.kernel
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let w = b.get(&join(prefix, "weight"))?;
        let bias = b.get(&join(prefix, "bias"))?;
        let windows = g.unfold_time(x, self.kernel, self.stride)?;
        let t_out = g.shape(windows)[1];
        let flat = g.reshape(windows, &[batch * t_out, self.kernel * features])?;
        let wt = g.transpose(w)?;
        let y = g.matmul(flat, wt)?;
        let y = g.add(y, bias)?;
        let y = g.relu(y);
        Ok((g.reshape(y, &[batch, t_out, self.channels()])?, out_lengths))
    }
}

impl Module for ConvParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role)) {
        f(join(prefix, "weight"), &self.weight, Role::Trainable);
        f(join(prefix, "bias"), &self.bias, Role::Trainable);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role)) {
        f(join(prefix, "weight"), &mut self.weight, Role::Trainable);
        f(join(prefix, "bias"), &mut self.bias, Role::Trainable);
    }
}

/// Runs `params` on a fresh binding; returns output, output lengths and the
/// bindings.
pub fn conv_front_end(
    g: &Graph,
    params: &ConvParams,
    x: Var,
    lengths: &[usize],
) -> Result<(Var, Vec<usize>, Bindings)> {
    let b = Bindings::new(g, params);
    let (y, out) = params.forward(g, &b, "", x, lengths)?;
    Ok((y, out, b))
}
