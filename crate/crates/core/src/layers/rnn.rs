//! Non-gated, nonspiking recurrent layer: `y[t] = g(BN(W x[t]) + V y[t-1])`.

use super::init::fan_in_bound;
use super::{check_lengths, join, project, seq_shape, uniform_tensor, BatchNormState, Bindings, LayerOutput, Module, Role};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, g: &Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams {
    pub w: Tensor,
    pub v: Tensor,
    pub bn: Option<BatchNormState>,
    pub activation: Activation,
}

impl RnnParams {
    pub fn init(
        rng: &mut Xoshiro256,
        input: usize,
        hidden: usize,
        batch_norm: bool,
        activation: Activation,
    ) -> Self {
        RnnParams {
            w: uniform_tensor(rng, &[hidden, input], fan_in_bound(input)),
            v: uniform_tensor(rng, &[hidden, hidden], fan_in_bound(hidden)),
            bn: batch_norm.then(|| BatchNormState::new(hidden)),
            activation,
        }
    }

    pub fn input(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn forward(
        &self,
        g: &Graph,
        b: &Bindings,
        prefix: &str,
        x: Var,
        lengths: &[usize],
    ) -> Result<LayerOutput> {
        let (batch, t_max, input) = seq_shape(g, x)?;
        if input != self.input() {
            return Err(Error::ShapeMismatch {
                op: "rnn_forward",
                lhs: vec![batch, t_max, input],
                rhs: self.w.shape().to_vec(),
            });
        }
        check_lengths(lengths, batch, t_max)?;
        let w = b.get(&join(prefix, "w"))?;
        let v = b.get(&join(prefix, "v"))?;
        let mut feed = project(g, x, w)?;
        let mut bn_stats = None;
        if let Some(bn) = &self.bn {
            let (normed, stats) = bn.apply(g, b, &join(prefix, "bn"), feed, lengths)?;
            feed = normed;
            bn_stats = stats;
        }
        let v_t = g.transpose(v)?;
        let mut outputs: Vec<Var> = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let feed_t = g.select(feed, 1, t)?;
            let pre = match outputs.last() {
                Some(&y_prev) => {
                    let rec = g.matmul(y_prev, v_t)?;
                    g.add(feed_t, rec)?
                }
                None => feed_t,
            };
            outputs.push(self.activation.apply(g, pre));
        }
        Ok(LayerOutput {
            output: g.stack(&outputs, 1)?,
            spikes: None,
            membrane: None,
            bn_stats,
        })
    }
}

impl Module for RnnParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role)) {
        f(join(prefix, "w"), &self.w, Role::Trainable);
        f(join(prefix, "v"), &self.v, Role::Trainable);
        if let Some(bn) = &self.bn {
            bn.visit(&join(prefix, "bn"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role)) {
        f(join(prefix, "w"), &mut self.w, Role::Trainable);
        f(join(prefix, "v"), &mut self.v, Role::Trainable);
        if let Some(bn) = &mut self.bn {
            bn.visit_mut(&join(prefix, "bn"), f);
        }
    }
}

pub fn rnn_forward(
    g: &Graph,
    params: &RnnParams,
    x: Var,
    lengths: &[usize],
) -> Result<(LayerOutput, Bindings)> {
    let b = Bindings::new(g, params);
    let out = params.forward(g, &b, "", x, lengths)?;
    Ok((out, b))
}
