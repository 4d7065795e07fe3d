//! Conv front-end, a stack of recurrent layers and a linear head producing
//! per-frame log-probabilities for CTC.

use serde::{Deserialize, Serialize};

use super::{
    frame_mask, join, run_bidirectional, Activation, BatchNormState, Bindings, BnMode,
    ConvParams, ConvSpec, Direction, LayerOutput, LifParams, LinearParams, LstmParams, Module,
    RnnParams, Role,
};
use crate::autodiff::{BatchStats, Graph, SurrogateSpec, Var};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Lif,
    Rnn,
    Lstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub hidden: usize,
    #[serde(default = "default_true")]
    pub bidirectional: bool,
}

fn default_true() -> bool {
    true
}

impl LayerSpec {
    pub fn output_size(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub conv: ConvSpec,
    pub layers: Vec<LayerSpec>,
    /// Output classes including the blank at index 0.
    pub vocab: usize,
    pub surrogate: SurrogateSpec,
    pub rnn_activation: Activation,
    pub batch_norm: bool,
    pub detach_reset: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::replacement(0, 4, 64, false)
    }
}

impl EncoderConfig {
    /// A stack of `total` bidirectional layers whose first `replaced` layers
    /// are LIF (`spiking`) or non-gated RNN layers and the rest LSTM.
    pub fn replacement(replaced: usize, total: usize, hidden: usize, spiking: bool) -> Self {
        let recurrent = if spiking { LayerKind::Lif } else { LayerKind::Rnn };
        let layers = (0..total)
            .map(|i| LayerSpec {
                kind: if i < replaced { recurrent } else { LayerKind::Lstm },
                hidden,
                bidirectional: true,
            })
            .collect();
        EncoderConfig {
            input_dim: 40,
            conv: ConvSpec::default(),
            layers,
            vocab: 9,
            surrogate: SurrogateSpec::default(),
            rnn_activation: Activation::Relu,
            batch_norm: true,
            detach_reset: false,
        }
    }

    /// Row label such as `1 RNN - 3 LSTM`; spiking and nonspiking
    /// non-gated layers both count as RNN.
    pub fn label(&self) -> String {
        let lstm = self.layers.iter().filter(|l| l.kind == LayerKind::Lstm).count();
        format!("{} RNN - {} LSTM", self.layers.len() - lstm, lstm)
    }

    pub fn is_spiking(&self) -> bool {
        self.layers.iter().any(|l| l.kind == LayerKind::Lif)
    }

    pub fn validate(&self) -> Result<()> {
        self.conv.validate()?;
        self.surrogate.validate()?;
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("at least one recurrent layer is required".into()));
        }
        if self.layers.iter().any(|l| l.hidden == 0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if self.vocab < 2 {
            return Err(Error::Config(format!(
                "vocab {} must be at least 2 (blank plus one token)",
                self.vocab
            )));
        }
        Ok(())
    }
}

/// Parameters of one recurrent layer in one direction.
#[derive(Clone, Debug, PartialEq)]
pub enum RecurrentParams {
    Lif(LifParams),
    Rnn(RnnParams),
    Lstm(LstmParams),
}

impl RecurrentParams {
    fn init(rng: &mut Xoshiro256, config: &EncoderConfig, spec: &LayerSpec, input: usize) -> Self {
        match spec.kind {
            LayerKind::Lif => {
                let mut p = LifParams::init(rng, input, spec.hidden, config.batch_norm);
                p.surrogate = config.surrogate;
                p.detach_reset = config.detach_reset;
                RecurrentParams::Lif(p)
            }
            LayerKind::Rnn => RecurrentParams::Rnn(RnnParams::init(
                rng,
                input,
                spec.hidden,
                config.batch_norm,
                config.rnn_activation,
            )),
            LayerKind::Lstm => RecurrentParams::Lstm(LstmParams::init(rng, input, spec.hidden)),
        }
    }

    pub fn forward(
        &self,
        g: &Graph,
        b: &Bindings,
        prefix: &str,
        x: Var,
        lengths: &[usize],
    ) -> Result<LayerOutput> {
        match self {
            RecurrentParams::Lif(p) => p.forward(g, b, prefix, x, lengths),
            RecurrentParams::Rnn(p) => p.forward(g, b, prefix, x, lengths),
            RecurrentParams::Lstm(p) => p.forward(g, b, prefix, x, lengths),
        }
    }

    pub fn batch_norm_mut(&mut self) -> Option<&mut BatchNormState> {
        match self {
            RecurrentParams::Lif(p) => p.bn.as_mut(),
            RecurrentParams::Rnn(p) => p.bn.as_mut(),
            RecurrentParams::Lstm(_) => None,
        }
    }

    fn module(&self) -> &dyn Module {
        match self {
            RecurrentParams::Lif(p) => p,
            RecurrentParams::Rnn(p) => p,
            RecurrentParams::Lstm(p) => p,
        }
    }

    fn module_mut(&mut self) -> &mut dyn Module {
        match self {
            RecurrentParams::Lif(p) => p,
            RecurrentParams::Rnn(p) => p,
            RecurrentParams::Lstm(p) => p,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub fwd: RecurrentParams,
    pub bwd: Option<RecurrentParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub conv: ConvParams,
    pub layers: Vec<EncoderLayer>,
    pub head: LinearParams,
}

#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `[B, T', vocab]`.
    pub log_probs: Var,
    /// Valid output frames per item.
    pub lengths: Vec<usize>,
    /// Spike trains `(layer index, [B, T', H])`, one per spiking direction.
    pub spikes: Vec<(usize, Var)>,
    /// Training-mode statistics keyed by batch-norm prefix.
    pub bn_stats: Vec<(String, BatchStats)>,
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let conv = ConvParams::init(&mut rng, &config.conv, config.input_dim);
        let mut input = config.conv.channels;
        let mut layers = Vec::with_capacity(config.layers.len());
        for spec in &config.layers {
            let fwd = RecurrentParams::init(&mut rng, config, spec, input);
            let bwd = spec
                .bidirectional
                .then(|| RecurrentParams::init(&mut rng, config, spec, input));
            layers.push(EncoderLayer { fwd, bwd });
            input = spec.output_size();
        }
        let head = LinearParams::init(&mut rng, input, config.vocab);
        Ok(EncoderParams {
            config: config.clone(),
            conv,
            layers,
            head,
        })
    }

    pub fn forward(&self, g: &Graph, b: &Bindings, x: Var, lengths: &[usize]) -> Result<EncoderOutput> {
        let (mut h, out_lengths) = self.conv.forward(g, b, "conv", x, lengths)?;
        let mut spikes = Vec::new();
        let mut bn_stats = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let base = format!("layers.{i}");
            let mut run = |xi: Var, dir: Direction| -> Result<Var> {
                let (name, params) = match dir {
                    Direction::Forward => ("fwd", &layer.fwd),
                    Direction::Backward => ("bwd", layer.bwd.as_ref().expect("bidirectional layer")),
                };
                let prefix = join(&base, name);
                let out = params.forward(g, b, &prefix, xi, &out_lengths)?;
                if let Some(s) = out.spikes {
                    spikes.push((i, s));
                }
                if let Some(stats) = out.bn_stats {
                    bn_stats.push((join(&prefix, "bn"), stats));
                }
                Ok(out.output)
            };
            h = if layer.bwd.is_some() {
                run_bidirectional(g, h, &out_lengths, run)?
            } else {
                run(h, Direction::Forward)?
            };
        }
        let logits = self.head.forward(g, b, "head", h)?;
        Ok(EncoderOutput {
            log_probs: g.log_softmax(logits)?,
            lengths: out_lengths,
            spikes,
            bn_stats,
        })
    }

    /// Switches every batch-norm state between batch and running statistics.
    pub fn set_mode(&mut self, mode: BnMode) {
        for layer in &mut self.layers {
            for p in std::iter::once(&mut layer.fwd).chain(layer.bwd.as_mut()) {
                if let Some(bn) = p.batch_norm_mut() {
                    bn.mode = mode;
                }
            }
        }
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn apply_bn_stats(&mut self, stats: &[(String, BatchStats)]) -> Result<()> {
        for (name, s) in stats {
            let bn = self
                .batch_norm_mut(name)
                .ok_or_else(|| Error::ConfigMismatch(format!("no batch norm named {name}")))?;
            bn.update_running(s);
        }
        Ok(())
    }

    fn batch_norm_mut(&mut self, name: &str) -> Option<&mut BatchNormState> {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let fwd = format!("layers.{i}.fwd.bn");
            let bwd = format!("layers.{i}.bwd.bn");
            if name == fwd {
                return layer.fwd.batch_norm_mut();
            }
            if name == bwd {
                return layer.bwd.as_mut()?.batch_norm_mut();
            }
        }
        None
    }

    /// Sets the threshold of every spiking layer.
    pub fn set_threshold(&mut self, threshold: f64) {
        self.config.surrogate.threshold = threshold;
        for layer in &mut self.layers {
            for p in std::iter::once(&mut layer.fwd).chain(layer.bwd.as_mut()) {
                if let RecurrentParams::Lif(lif) = p {
                    lif.surrogate.threshold = threshold;
                }
            }
        }
    }
}

impl Module for EncoderParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor, Role)) {
        self.conv.visit(&join(prefix, "conv"), f);
        for (i, layer) in self.layers.iter().enumerate() {
            let base = join(prefix, &format!("layers.{i}"));
            layer.fwd.module().visit(&join(&base, "fwd"), f);
            if let Some(bwd) = &layer.bwd {
                bwd.module().visit(&join(&base, "bwd"), f);
            }
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, Role)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let base = join(prefix, &format!("layers.{i}"));
            layer.fwd.module_mut().visit_mut(&join(&base, "fwd"), f);
            if let Some(bwd) = &mut layer.bwd {
                bwd.module_mut().visit_mut(&join(&base, "bwd"), f);
            }
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Mean spike activity per spiking layer over valid frames, both
/// directions pooled. Layers without spikes are omitted.
pub fn spike_rates(g: &Graph, out: &EncoderOutput) -> Vec<(usize, f64)> {
    let mut totals: Vec<(usize, f64, usize)> = Vec::new();
    for &(layer, s) in &out.spikes {
        let t = g.value(s);
        let (t_max, h) = (t.shape()[1], t.shape()[2]);
        let mask = frame_mask(&out.lengths, t_max);
        let (mut sum, mut count) = (0.0, 0);
        for (row, &valid) in t.data().chunks(h).zip(&mask) {
            if valid {
                sum += row.iter().sum::<f64>();
                count += h;
            }
        }
        match totals.iter_mut().find(|e| e.0 == layer) {
            Some(e) => {
                e.1 += sum;
                e.2 += count;
            }
            None => totals.push((layer, sum, count)),
        }
    }
    totals
        .into_iter()
        .map(|(layer, sum, count)| (layer, if count == 0 { 0.0 } else { sum / count as f64 }))
        .collect()
}

/// Binds `params` on `g` and runs the encoder.
pub fn encoder_forward(
    g: &Graph,
    params: &EncoderParams,
    x: Var,
    lengths: &[usize],
) -> Result<(EncoderOutput, Bindings)> {
    let b = Bindings::new(g, params);
    let out = params.forward(g, &b, x, lengths)?;
    Ok((out, b))
}
