use serde::{Deserialize, Serialize};

use super::metrics::{EpochMetrics, RunMetrics, StepMetrics};
use super::optimizer::{global_norm, Optimizer, Sgd};
use crate::autodiff::Graph;
use crate::data::{pad_batch, Dataset, PaddedBatch, Utterance};
use crate::error::{Error, Result};
use crate::layers::{spike_rates, Bindings, BnMode, EncoderConfig, EncoderParams};
use crate::loss::{ctc_greedy_decode, edit_distance, ErrorRateReport};
use crate::rng::Xoshiro256;

/// Mixed into the seed for the shuffling stream so it is independent of
/// parameter initialization.
const SHUFFLE_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Global-norm clipping threshold; off when absent.
    pub clip: Option<f64>,
    pub seed: u64,
    /// A step whose gradient norm exceeds this multiple of the first step's
    /// norm ends the run as diverged.
    pub explosion_factor: f64,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
    pub eval_batch_size: usize,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            momentum: 0.0,
            batch_size: 16,
            epochs: 10,
            clip: None,
            seed: 0,
            explosion_factor: 1e3,
            max_steps: None,
            eval_batch_size: 64,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip {c} must be positive")));
            }
        }
        if !(self.explosion_factor > 1.0) {
            return Err(Error::Config(format!(
                "explosion_factor {} must exceed 1",
                self.explosion_factor
            )));
        }
        Ok(())
    }

    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let dim = self.encoder.input_dim;
        for (i, u) in data.utterances.iter().enumerate() {
            if u.feature_dim() != dim {
                return Err(Error::ConfigMismatch(format!(
                    "utterance {i} has {} features, encoder expects {dim}",
                    u.feature_dim()
                )));
            }
            if let Some(&t) = u.tokens.iter().find(|&&t| t >= self.encoder.vocab) {
                return Err(Error::ConfigMismatch(format!(
                    "utterance {i} has token {t}, encoder vocab is {}",
                    self.encoder.vocab
                )));
            }
        }
        Ok(())
    }
}

/// One SGD step per call on a padded batch; tracks the explosion bound.
pub struct Trainer {
    pub params: EncoderParams,
    pub optimizer: Sgd,
    pub explosion_factor: f64,
    pub initial_grad_norm: Option<f64>,
    steps: usize,
}

impl Trainer {
    pub fn new(params: EncoderParams, config: &TrainConfig) -> Self {
        Trainer {
            params,
            optimizer: Sgd::new(config.learning_rate, config.clip).with_momentum(config.momentum),
            explosion_factor: config.explosion_factor,
            initial_grad_norm: None,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `explosion_factor` times the first step's gradient norm.
    pub fn explosion_bound(&self) -> Option<f64> {
        self.initial_grad_norm
            .filter(|&n| n > 0.0)
            .map(|n| n * self.explosion_factor)
    }

    /// Forward, backward and update. Returns the step's metrics and whether
    /// it diverged; a diverged step does not touch the parameters.
    pub fn step(&mut self, batch: &PaddedBatch, epoch: usize) -> Result<(StepMetrics, bool)> {
        self.steps += 1;
        self.params.set_mode(BnMode::Train);
        let g = Graph::new();
        let b = Bindings::new(&g, &self.params);
        let x = g.constant(batch.features.clone());
        let out = self.params.forward(&g, &b, x, &batch.frame_lengths)?;
        let ctc = g.ctc_loss(out.log_probs, &batch.targets, &out.lengths)?;
        let loss = g.scalar(ctc.loss);
        let layer_spike_rates = spike_rates(&g, &out);
        let spike_rate = (!layer_spike_rates.is_empty()).then(|| {
            layer_spike_rates.iter().map(|(_, r)| r).sum::<f64>() / layer_spike_rates.len() as f64
        });
        let grad_norm = if loss.is_finite() {
            g.backward(ctc.loss)?;
            global_norm(&b.gradients(&g))
        } else {
            f64::NAN
        };
        if self.initial_grad_norm.is_none() && grad_norm.is_finite() {
            self.initial_grad_norm = Some(grad_norm);
        }
        let metrics = StepMetrics {
            step: self.steps,
            epoch,
            loss,
            grad_norm,
            spike_rate,
            layer_spike_rates,
        };
        let exploded = self.explosion_bound().is_some_and(|bound| grad_norm > bound);
        if !loss.is_finite() || !grad_norm.is_finite() || exploded {
            return Ok((metrics, true));
        }
        let grads = b.gradients(&g);
        let report = self.optimizer.step(&mut self.params, &grads)?;
        debug_assert!(report.applied);
        self.params.apply_bn_stats(&out.bn_stats)?;
        Ok((metrics, false))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: ErrorRateReport,
    /// Mean CTC loss over items whose target fits their frames.
    pub mean_loss: f64,
    pub hypotheses: Vec<Vec<usize>>,
}

/// Greedy-decodes `data` with running batch-norm statistics and pools the
/// token error rate over the whole set.
pub fn evaluate(params: &EncoderParams, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() || batch_size == 0 {
        return Err(Error::invalid("evaluation needs data and a positive batch size"));
    }
    let mut params = params.clone();
    params.set_mode(BnMode::Eval);
    let refs: Vec<&Utterance> = data.utterances.iter().collect();
    let mut hypotheses = Vec::with_capacity(data.len());
    let mut losses = Vec::with_capacity(data.len());
    for chunk in refs.chunks(batch_size) {
        let batch = pad_batch(chunk)?;
        let g = Graph::new();
        let b = Bindings::frozen(&g, &params);
        let x = g.constant(batch.features.clone());
        let out = params.forward(&g, &b, x, &batch.frame_lengths)?;
        let ctc = g.ctc_loss(out.log_probs, &batch.targets, &out.lengths)?;
        losses.extend(ctc.per_item.iter().copied().filter(|v| v.is_finite()));
        let lp = g.value(out.log_probs);
        let s = lp.shape();
        hypotheses.extend(ctc_greedy_decode(lp.data(), [s[0], s[1], s[2]], &out.lengths));
    }
    let (edits, n) = data
        .utterances
        .iter()
        .zip(&hypotheses)
        .fold((0, 0), |(e, n), (u, h)| (e + edit_distance(&u.tokens, h), n + u.tokens.len()));
    losses.sort_by(f64::total_cmp);
    let mean_loss = if losses.is_empty() {
        f64::INFINITY
    } else {
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    Ok(Evaluation {
        report: ErrorRateReport::new(edits, n)?,
        mean_loss,
        hypotheses,
    })
}

pub struct TrainOutcome {
    pub metrics: RunMetrics,
    /// Final parameters, or the last good ones if the run diverged.
    pub params: EncoderParams,
}

pub fn train_run(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<TrainOutcome> {
    train_run_with(config, train, test, &mut |_| {})
}

/// Trains from `EncoderParams::init(&config.encoder, config.seed)`, calling
/// `on_line` with each metrics line as it is produced.
pub fn train_run_with(
    config: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    on_line: &mut dyn FnMut(&str),
) -> Result<TrainOutcome> {
    config.validate()?;
    config.check_dataset(train)?;
    config.check_dataset(test)?;
    let params = EncoderParams::init(&config.encoder, config.seed)?;
    let control = evaluate(&params, test, config.eval_batch_size)?.report;
    on_line(&format!("control {}", control.to_line()));

    let mut metrics = RunMetrics {
        label: config.encoder.label(),
        spiking: config.encoder.is_spiking(),
        control: Some(control),
        ..RunMetrics::default()
    };
    let mut trainer = Trainer::new(params, config);
    let mut shuffler = Xoshiro256::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..train.len()).collect();

    'epochs: for epoch in 1..=config.epochs {
        shuffler.shuffle(&mut order);
        let mut epoch_losses = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| trainer.steps() >= m) {
                break 'epochs;
            }
            let items: Vec<&Utterance> = chunk.iter().map(|&i| &train.utterances[i]).collect();
            let batch = pad_batch(&items)?;
            let (step, diverged) = trainer.step(&batch, epoch)?;
            on_line(&step.to_line());
            epoch_losses.push(step.loss);
            metrics.steps.push(step);
            metrics.initial_grad_norm = trainer.initial_grad_norm;
            metrics.explosion_bound = trainer.explosion_bound();
            if diverged {
                metrics.diverged = true;
                metrics.diverged_step = Some(trainer.steps());
                on_line(&format!("diverged {}", trainer.steps()));
                break 'epochs;
            }
        }
        let eval = evaluate(&trainer.params, test, config.eval_batch_size)?;
        let e = EpochMetrics {
            epoch,
            train_loss: epoch_losses.iter().sum::<f64>() / epoch_losses.len().max(1) as f64,
            report: eval.report,
        };
        on_line(&e.to_line());
        metrics.epochs.push(e);
    }
    Ok(TrainOutcome {
        metrics,
        params: trainer.params,
    })
}
