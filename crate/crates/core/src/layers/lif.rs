//! Leaky integrate-and-fire layer.
//!
//! For each unit and time step:
//!
//! ```text
//! I[t] = BN(W x[t]) + V s[t-1]
//! u[t] = alpha (u[t-1] - s[t-1]) + (1 - alpha) I[t]
//! s[t] = 1[u[t] >= threshold]
//! ```
//!
//! with `u[-1] = s[-1] = 0` and `alpha = sigmoid(alpha_raw)` per unit.

use super::init::fan_in_bound;
use super::{check_lengths, join, project, seq_shape, uniform_tensor, BatchNormState, Bindings, LayerOutput, Module, Role};
use crate::autodiff::kernels::sigmoid;
use crate::autodiff::{Graph, SurrogateSpec, Var};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

/// `alpha_raw` such that the initial leak is 0.9.
pub const INITIAL_ALPHA_RAW: f64 = 2.197_224_577_336_219_6; // ln 9

#[derive(Clone, Debug, PartialEq)]
pub struct LifParams {
    /// Feedforward weights `[hidden, input]`.
    pub w: Tensor,
    /// Recurrent weights `[hidden, hidden]`, diagonal included.
    pub v: Tensor,
    /// Unconstrained leak parameter `[hidden]`.
    pub alpha_raw: Tensor,
    pub bn: Option<BatchNormState>,
    pub surrogate: SurrogateSpec,
    /// Stop gradients through the reset term `s[t-1]` of the membrane update.
    pub detach_reset: bool,
}

impl LifParams {
    pub fn init(rng: &mut Xoshiro256, input: usize, hidden: usize, batch_norm: bool) -> Self {
        LifParams {
            w: uniform_tensor(rng, &[hidden, input], fan_in_bound(input)),
            v: uniform_tensor(rng, &[hidden, hidden], fan_in_bound(hidden)),
            alpha_raw: Tensor::full(&[hidden], INITIAL_ALPHA_RAW),
            bn: batch_norm.then(|| BatchNormState::new(hidden)),
            surrogate: SurrogateSpec::default(),
            detach_reset: false,
        }
    }

    pub fn input(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w.shape()[0]
    }

    /// Effective leak `sigmoid(alpha_raw)` per unit.
    pub fn leak(&self) -> Vec<f64> {
        self.alpha_raw.data().iter().map(|&a| sigmoid(a)).collect()
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
                op: "lif_forward",
                lhs: vec![batch, t_max, input],
                rhs: self.w.shape().to_vec(),
            });
        }
        check_lengths(lengths, batch, t_max)?;
        let w = b.get(&join(prefix, "w"))?;
        let v = b.get(&join(prefix, "v"))?;
        let alpha_raw = b.get(&join(prefix, "alpha_raw"))?;

        let mut feed = project(g, x, w)?;
        let mut bn_stats = None;
        if let Some(bn) = &self.bn {
            let (normed, stats) = bn.apply(g, b, &join(prefix, "bn"), feed, lengths)?;
            feed = normed;
            bn_stats = stats;
        }
        let alpha = g.sigmoid(alpha_raw);
        let gain = g.affine(alpha, -1.0, 1.0);
        let v_t = g.transpose(v)?;

        let mut spikes = Vec::with_capacity(t_max);
        let mut membrane = Vec::with_capacity(t_max);
        let mut state: Option<(Var, Var)> = None;
        for t in 0..t_max {
            let feed_t = g.select(feed, 1, t)?;
            let current = match state {
                Some((_, s)) => {
                    let rec = g.matmul(s, v_t)?;
                    g.add(feed_t, rec)?
                }
                None => feed_t,
            };
            let drive = g.mul(current, gain)?;
            let u = match state {
                Some((u_prev, s_prev)) => {
                    let reset = if self.detach_reset {
                        g.detach(s_prev)
                    } else {
                        s_prev
                    };
                    let leaked = g.sub(u_prev, reset)?;
                    let leaked = g.mul(leaked, alpha)?;
                    g.add(leaked, drive)?
                }
                None => drive,
            };
            let s = g.heaviside_surrogate(u, self.surrogate);
            spikes.push(s);
            membrane.push(u);
            state = Some((u, s));
        }
        let out = g.stack(&spikes, 1)?;
        Ok(LayerOutput {
            output: out,
            spikes: Some(out),
            bn_stats,
            membrane: Some(g.stack(&membrane, 1)?),
        })
    }
}

impl Module for LifParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role)) {
        f(join(prefix, "w"), &self.w, Role::Trainable);
        f(join(prefix, "v"), &self.v, Role::Trainable);
        f(join(prefix, "alpha_raw"), &self.alpha_raw, Role::Trainable);
        if let Some(bn) = &self.bn {
            bn.visit(&join(prefix, "bn"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role)) {
        f(join(prefix, "w"), &mut self.w, Role::Trainable);
        f(join(prefix, "v"), &mut self.v, Role::Trainable);
        f(join(prefix, "alpha_raw"), &mut self.alpha_raw, Role::Trainable);
        if let Some(bn) = &mut self.bn {
            bn.visit_mut(&join(prefix, "bn"), f);
        }
    }
}

/// Binds `params` on `g` and runs the layer; returns the bindings so
/// callers can read parameter gradients after `backward`.
pub fn lif_forward(
    g: &Graph,
    params: &LifParams,
    x: Var,
    lengths: &[usize],
) -> Result<(LayerOutput, Bindings)> {
    let b = Bindings::new(g, params);
    let out = params.forward(g, &b, "", x, lengths)?;
    Ok((out, b))
}

/// Time series of a single simulated neuron.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeuronTrace {
    pub current: Vec<f64>,
    pub membrane: Vec<f64>,
    pub spikes: Vec<f64>,
}

/// Integrates one LIF neuron without batch normalization.
///
/// `inputs[t][i]` is presynaptic train `i` at step `t`; the stimulus is
/// `I[t] = sum_i weights[i] inputs[t][i] + bias + recurrent s[t-1]`.
pub fn simulate_neuron(
    alpha: f64,
    surrogate: SurrogateSpec,
    weights: &[f64],
    inputs: &[Vec<f64>],
    bias: f64,
    recurrent: f64,
) -> Result<NeuronTrace> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("leak {alpha} outside [0, 1]")));
    }
    let mut trace = NeuronTrace::default();
    let (mut u, mut s) = (0.0, 0.0);
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != weights.len() {
            return Err(Error::invalid(format!(
                "step {t} has {} inputs for {} weights",
                x.len(),
                weights.len()
            )));
        }
        let i = weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + bias + recurrent * s;
        u = alpha * (u - s) + (1.0 - alpha) * i;
        s = surrogate.forward(u);
        trace.current.push(i);
        trace.membrane.push(u);
        trace.spikes.push(s);
    }
    Ok(trace)
}
