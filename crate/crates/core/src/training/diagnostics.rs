//! Gradient-norm traces of non-gated spiking, non-gated nonspiking and LSTM
//! encoders on long sequences, with clipping disabled.

use serde::{Deserialize, Serialize};

use super::run::{TrainConfig, Trainer};
use crate::data::{pad_batch, render_utterance, Dataset, SynthSpec, Utterance};
use crate::error::{Error, Result};
use crate::layers::{Activation, EncoderConfig, EncoderParams, LayerKind, LayerSpec};
use crate::rng::Xoshiro256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Non-gated nonspiking RNN layers.
    Nonspiking,
    /// LIF layers.
    Spiking,
    Lstm,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Nonspiking, Variant::Spiking, Variant::Lstm];

    pub fn kind(self) -> LayerKind {
        match self {
            Variant::Nonspiking => LayerKind::Rnn,
            Variant::Spiking => LayerKind::Lif,
            Variant::Lstm => LayerKind::Lstm,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nonspiking => "nonspiking",
            Variant::Spiking => "spiking",
            Variant::Lstm => "lstm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub seeds: Vec<u64>,
    pub steps: usize,
    /// Input frames per sequence.
    pub frames: usize,
    pub utterances: usize,
    pub batch_size: usize,
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    pub learning_rate: f64,
    pub explosion_factor: f64,
    pub feature_dim: usize,
    pub vocab: usize,
    pub noise: f64,
    pub rnn_activation: Activation,
    pub variants: Vec<Variant>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            seeds: (0..5).collect(),
            steps: 200,
            frames: 500,
            utterances: 16,
            batch_size: 4,
            layers: 2,
            hidden: 32,
            bidirectional: true,
            learning_rate: 0.05,
            explosion_factor: 1e3,
            feature_dim: 40,
            vocab: 8,
            noise: 0.5,
            rnn_activation: Activation::Relu,
            variants: Variant::ALL.to_vec(),
        }
    }
}

impl DiagnosticsConfig {
    fn encoder(&self, variant: Variant) -> EncoderConfig {
        let mut e = EncoderConfig::replacement(0, 0, self.hidden, false);
        e.layers = vec![
            LayerSpec {
                kind: variant.kind(),
                hidden: self.hidden,
                bidirectional: self.bidirectional,
            };
            self.layers
        ];
        e.input_dim = self.feature_dim;
        e.vocab = self.vocab + 1;
        e.rnn_activation = self.rnn_activation;
        e
    }

    /// Training settings for one variant and seed; clipping is always off.
    pub fn train_config(&self, variant: Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            clip: None,
            seed,
            explosion_factor: self.explosion_factor,
            encoder: self.encoder(variant),
            ..TrainConfig::default()
        }
    }
}

/// `count` utterances of exactly `frames` frames each, with roughly one
/// token per 25 frames.
pub fn long_sequences(
    seed: u64,
    count: usize,
    frames: usize,
    feature_dim: usize,
    vocab: usize,
    noise: f64,
) -> Result<Dataset> {
    if frames < 25 || count == 0 {
        return Err(Error::invalid(format!(
            "long sequences need at least 25 frames and one utterance, got {frames} x {count}"
        )));
    }
    let spec = SynthSpec {
        vocab,
        feature_dim,
        noise,
        seed,
        ..SynthSpec::default()
    };
    spec.validate()?;
    let protos = spec.prototypes();
    let n = frames / 25;
    let utterances = (0..count)
        .map(|i| {
            let mut rng = Xoshiro256::seed_from_u64(spec.utterance_seed(i));
            let tokens: Vec<usize> = (0..n).map(|_| 1 + rng.below(vocab)).collect();
            let blocks: Vec<usize> = (0..n).map(|_| rng.range_inclusive(15, 20)).collect();
            let mut gaps: Vec<usize> = (0..n).map(|_| rng.range_inclusive(1, 3)).collect();
            let used: usize = blocks.iter().sum::<usize>() + gaps.iter().sum::<usize>();
            gaps.push(frames - used);
            render_utterance(&spec, &protos, &tokens, &blocks, &gaps, &mut rng)
        })
        .collect();
    Ok(Dataset {
        spec: Some(spec),
        utterances,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub variant: Variant,
    pub seed: u64,
    pub initial_norm: f64,
    /// Non-finite norms count as infinite.
    pub max_norm: f64,
    pub median_norm: f64,
    pub crossed_bound: bool,
    /// Steps completed before the bound was crossed or the budget ran out.
    pub steps_run: usize,
    pub trace: Vec<f64>,
}

impl DiagnosticSummary {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.variant.name(),
            self.seed,
            self.initial_norm,
            self.max_norm,
            self.median_norm,
            self.crossed_bound,
            self.steps_run
        )
    }
}

/// The comparison drawn from a set of summaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionCheck {
    pub spiking_crossings: usize,
    /// Seeds on which the nonspiking maximum exceeds the spiking maximum.
    pub nonspiking_larger: usize,
    pub seeds: usize,
}

impl DirectionCheck {
    pub fn from_summaries(summaries: &[DiagnosticSummary]) -> Self {
        let find = |v: Variant, seed: u64| summaries.iter().find(|s| s.variant == v && s.seed == seed);
        let spiking: Vec<&DiagnosticSummary> =
            summaries.iter().filter(|s| s.variant == Variant::Spiking).collect();
        let mut larger = 0;
        let mut seeds = 0;
        for s in &spiking {
            if let Some(ns) = find(Variant::Nonspiking, s.seed) {
                seeds += 1;
                if ns.max_norm > s.max_norm {
                    larger += 1;
                }
            }
        }
        DirectionCheck {
            spiking_crossings: spiking.iter().filter(|s| s.crossed_bound).count(),
            nonspiking_larger: larger,
            seeds,
        }
    }

    pub fn holds(&self) -> bool {
        self.seeds > 0 && self.spiking_crossings == 0 && 2 * self.nonspiking_larger > self.seeds
    }
}

fn norm_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Trains each variant from each seed for `config.steps` SGD steps on one
/// shared long-sequence dataset and summarizes the gradient norms.
pub fn gradient_diagnostics(config: &DiagnosticsConfig) -> Result<Vec<DiagnosticSummary>> {
    if config.steps == 0 || config.seeds.is_empty() || config.batch_size == 0 {
        return Err(Error::Config("diagnostics need steps, seeds and a batch size".into()));
    }
    let data = long_sequences(
        0xD1A6,
        config.utterances,
        config.frames,
        config.feature_dim,
        config.vocab,
        config.noise,
    )?;
    let refs: Vec<&Utterance> = data.utterances.iter().collect();
    let batches = refs
        .chunks(config.batch_size)
        .map(pad_batch)
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for &variant in &config.variants {
        for &seed in &config.seeds {
            let tc = config.train_config(variant, seed);
            tc.validate()?;
            let mut trainer = Trainer::new(EncoderParams::init(&tc.encoder, seed)?, &tc);
            let mut trace = Vec::with_capacity(config.steps);
            let mut crossed = false;
            for i in 0..config.steps {
                let batch = &batches[i % batches.len()];
                let (m, diverged) = trainer.step(batch, 1 + i / batches.len())?;
                trace.push(norm_or_inf(m.grad_norm));
                if diverged {
                    crossed = true;
                    break;
                }
            }
            let mut sorted = trace.clone();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            let median = if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            };
            out.push(DiagnosticSummary {
                variant,
                seed,
                initial_norm: trainer.initial_grad_norm.unwrap_or(f64::NAN),
                max_norm: trace.iter().copied().fold(0.0, f64::max),
                median_norm: median,
                crossed_bound: crossed,
                steps_run: trace.len(),
                trace,
            });
        }
    }
    Ok(out)
}
