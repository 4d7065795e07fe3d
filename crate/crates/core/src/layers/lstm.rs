//! Standard LSTM. Gate blocks in `w_ih`, `w_hh` and `bias` are ordered
//! input, forget, cell candidate, output:
//!
//! ```text
//! [i f g o] = x W_ih^T + h[t-1] W_hh^T + bias
//! c[t] = sigmoid(f) c[t-1] + sigmoid(i) tanh(g)
//! h[t] = sigmoid(o) tanh(c[t])
//! ```

use super::init::fan_in_bound;
use super::{check_lengths, join, project, seq_shape, uniform_tensor, Bindings, LayerOutput, Module, Role};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `[4 * hidden, input]`.
    pub w_ih: Tensor,
    /// `[4 * hidden, hidden]`.
    pub w_hh: Tensor,
    /// `[4 * hidden]`.
    pub bias: Tensor,
}

impl LstmParams {
    pub fn init(rng: &mut Xoshiro256, input: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: uniform_tensor(rng, &[4 * hidden, input], fan_in_bound(input)),
            w_hh: uniform_tensor(rng, &[4 * hidden, hidden], fan_in_bound(hidden)),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: Tensor::zeros(&[4 * hidden, input]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input(&self) -> usize {
        self.w_ih.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
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
        let h = self.hidden();
        if input != self.input() || self.w_ih.shape()[0] != 4 * h || self.bias.shape() != [4 * h] {
            return Err(Error::ShapeMismatch {
                op: "lstm_forward",
                lhs: vec![batch, t_max, input],
                rhs: self.w_ih.shape().to_vec(),
            });
        }
        check_lengths(lengths, batch, t_max)?;
        let w_ih = b.get(&join(prefix, "w_ih"))?;
        let w_hh = b.get(&join(prefix, "w_hh"))?;
        let bias = b.get(&join(prefix, "bias"))?;
        let feed = project(g, x, w_ih)?;
        let feed = g.add(feed, bias)?;
        let w_hh_t = g.transpose(w_hh)?;

        let mut outputs = Vec::with_capacity(t_max);
        let mut state: Option<(Var, Var)> = None;
        for t in 0..t_max {
            let mut z = g.select(feed, 1, t)?;
            if let Some((h_prev, _)) = state {
                let rec = g.matmul(h_prev, w_hh_t)?;
                z = g.add(z, rec)?;
            }
            let gate = |k: usize| g.slice(z, 1, k * h, h);
            let i = g.sigmoid(gate(0)?);
            let f = g.sigmoid(gate(1)?);
            let cand = g.tanh(gate(2)?);
            let o = g.sigmoid(gate(3)?);
            let fresh = g.mul(i, cand)?;
            let c = match state {
                Some((_, c_prev)) => {
                    let kept = g.mul(f, c_prev)?;
                    g.add(kept, fresh)?
                }
                None => fresh,
            };
            let c_act = g.tanh(c);
            let h_t = g.mul(o, c_act)?;
            outputs.push(h_t);
            state = Some((h_t, c));
        }
        Ok(LayerOutput {
            output: g.stack(&outputs, 1)?,
            spikes: None,
            membrane: None,
            bn_stats: None,
        })
    }
}

impl Module for LstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role)) {
        f(join(prefix, "w_ih"), &self.w_ih, Role::Trainable);
        f(join(prefix, "w_hh"), &self.w_hh, Role::Trainable);
        f(join(prefix, "bias"), &self.bias, Role::Trainable);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role)) {
        f(join(prefix, "w_ih"), &mut self.w_ih, Role::Trainable);
        f(join(prefix, "w_hh"), &mut self.w_hh, Role::Trainable);
        f(join(prefix, "bias"), &mut self.bias, Role::Trainable);
    }
}

pub fn lstm_forward(
    g: &Graph,
    params: &LstmParams,
    x: Var,
    lengths: &[usize],
) -> Result<(LayerOutput, Bindings)> {
    let b = Bindings::new(g, params);
    let out = params.forward(g, &b, "", x, lengths)?;
    Ok((out, b))
}
