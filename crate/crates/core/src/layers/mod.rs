//! Sequence layers and the encoder built from them.
//!
//! Parameters live in plain structs holding [`Tensor`]s. Before a forward
//! pass they are placed on a [`Graph`] through [`Bindings`], which maps each
//! dotted parameter name (`layers.0.fwd.w`) to its leaf [`Var`]. After
//! `backward`, [`Bindings::gradients`] returns gradients in the same order
//! as [`Module::visit`].

mod batchnorm;
mod bidir;
mod conv;
mod encoder;
mod init;
mod lif;
mod linear;
mod lstm;
mod rnn;

use std::collections::BTreeMap;

use crate::autodiff::{BatchStats, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use batchnorm::{batchnorm_apply, BatchNormState, BnMode};
pub use bidir::{run_bidirectional, Direction};
pub use conv::{conv_front_end, conv_output_length, ConvParams, ConvSpec};
pub use encoder::{
    encoder_forward, spike_rates, EncoderConfig, EncoderLayer, EncoderOutput, EncoderParams,
    LayerKind, LayerSpec, RecurrentParams,
};
pub use init::uniform_tensor;
pub use lif::{lif_forward, simulate_neuron, LifParams, NeuronTrace, INITIAL_ALPHA_RAW};
pub use linear::LinearParams;
pub use lstm::{lstm_forward, LstmParams};
pub use rnn::{rnn_forward, Activation, RnnParams};

/// Whether a tensor is updated by the optimizer or carried as state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Trainable,
    Buffer,
}

/// A collection of named tensors with a fixed visiting order.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role));

    /// All tensors, trainable and buffers, in visiting order.
    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t, _| out.push((name, t.clone())));
        out
    }

    /// Overwrites every tensor from `entries`; names and shapes must match.
    fn load_named(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        let map: BTreeMap<&str, &Tensor> = entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut err = None;
        self.visit_mut("", &mut |name, t, _| {
            if err.is_some() {
                return;
            }
            match map.get(name.as_str()) {
                Some(src) if src.shape() == t.shape() => *t = (*src).clone(),
                Some(src) => {
                    err = Some(Error::ConfigMismatch(format!(
                        "{name}: stored shape {:?}, expected {:?}",
                        src.shape(),
                        t.shape()
                    )))
                }
                None => err = Some(Error::ConfigMismatch(format!("{name} missing"))),
            }
        });
        err.map_or(Ok(()), Err)
    }

    fn trainable_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t, role| {
            if role == Role::Trainable {
                n += t.numel();
            }
        });
        n
    }

    /// Mutable references to trainable tensors in visiting order.
    fn for_each_trainable_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.visit_mut("", &mut |name, t, role| {
            if role == Role::Trainable {
                f(&name, t);
            }
        });
    }

    fn bind(&self, g: &Graph) -> Bindings
    where
        Self: Sized,
    {
        Bindings::new(g, self)
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Trainable parameters placed on a graph, addressed by dotted name.
pub struct Bindings {
    order: Vec<(String, Var)>,
    index: BTreeMap<String, Var>,
}

impl Bindings {
    /// Creates a gradient-tracking leaf for every trainable tensor.
    pub fn new(g: &Graph, module: &dyn Module) -> Self {
        Self::build(g, module, true)
    }

    /// Like [`Bindings::new`] but with constant leaves (inference).
    pub fn frozen(g: &Graph, module: &dyn Module) -> Self {
        Self::build(g, module, false)
    }

    fn build(g: &Graph, module: &dyn Module, track: bool) -> Self {
        let mut order = Vec::new();
        module.visit("", &mut |name, t, role| {
            if role == Role::Trainable {
                let v = if track {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                };
                order.push((name, v));
            }
        });
        let index = order.iter().cloned().collect();
        Bindings { order, index }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::ConfigMismatch(format!("no parameter named {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Gradients of every bound parameter in binding order; zeros where no
    /// gradient flowed.
    pub fn gradients(&self, g: &Graph) -> Vec<Tensor> {
        self.order.iter().map(|(_, v)| g.grad_or_zeros(*v)).collect()
    }
}

/// Result of one layer's forward pass.
#[derive(Clone, Debug)]
pub struct LayerOutput {
    pub output: Var,
    /// Binary spike train `[B, T, H]` for spiking layers.
    pub spikes: Option<Var>,
    /// Membrane potential `[B, T, H]` for spiking layers.
    pub membrane: Option<Var>,
    pub bn_stats: Option<BatchStats>,
}

/// Row mask over `[B, T]` flattened frames: frame `t` of item `b` is valid
/// iff `t < lengths[b]`.
pub fn frame_mask(lengths: &[usize], t_max: usize) -> Vec<bool> {
    lengths
        .iter()
        .flat_map(|&len| (0..t_max).map(move |t| t < len))
        .collect()
}

/// `x: [B, T, in]` times `w^T` with `w: [out, in]`, giving `[B, T, out]`.
pub(crate) fn project(g: &Graph, x: Var, w: Var) -> Result<Var> {
    let xs = g.shape(x);
    let ws = g.shape(w);
    if xs.len() != 3 || ws.len() != 2 || xs[2] != ws[1] {
        return Err(Error::ShapeMismatch {
            op: "project",
            lhs: xs,
            rhs: ws,
        });
    }
    let flat = g.reshape(x, &[xs[0] * xs[1], xs[2]])?;
    let wt = g.transpose(w)?;
    let y = g.matmul(flat, wt)?;
    g.reshape(y, &[xs[0], xs[1], ws[0]])
}

/// Sequence shape `[B, T, F]` of `x`.
pub(crate) fn seq_shape(g: &Graph, x: Var) -> Result<(usize, usize, usize)> {
    match g.shape(x).as_slice() {
        &[b, t, f] => Ok((b, t, f)),
        other => Err(Error::invalid(format!("expected [batch, time, features], got {other:?}"))),
    }
}

pub(crate) fn check_lengths(lengths: &[usize], batch: usize, t_max: usize) -> Result<()> {
    if lengths.len() != batch || lengths.iter().any(|&l| l == 0 || l > t_max) {
        return Err(Error::invalid(format!(
            "lengths {lengths:?} for batch {batch} with {t_max} frames"
        )));
    }
    Ok(())
}
