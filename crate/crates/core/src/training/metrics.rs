use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::loss::ErrorRateReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Mean spike activity over all spiking layers; `None` without any.
    pub spike_rate: Option<f64>,
    /// `(layer index, rate)` for each spiking layer.
    pub layer_spike_rates: Vec<(usize, f64)>,
}

impl StepMetrics {
    /// `step loss grad_norm spike_rate`, with `-` for a missing spike rate.
    pub fn to_line(&self) -> String {
        let rate = self.spike_rate.map_or_else(|| "-".to_string(), |r| r.to_string());
        format!("{} {} {} {}", self.step, self.loss, self.grad_norm, rate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch's steps.
    pub train_loss: f64,
    /// Token error rate on the evaluation set.
    pub report: ErrorRateReport,
}

impl EpochMetrics {
    pub fn to_line(&self) -> String {
        format!("epoch {} {} {}", self.epoch, self.train_loss, self.report.to_line())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub spiking: bool,
    pub steps: Vec<StepMetrics>,
    pub epochs: Vec<EpochMetrics>,
    /// Error rate of the untrained model on the evaluation set.
    pub control: Option<ErrorRateReport>,
    pub initial_grad_norm: Option<f64>,
    pub explosion_bound: Option<f64>,
    pub diverged: bool,
    pub diverged_step: Option<usize>,
}

impl RunMetrics {
    pub fn final_report(&self) -> Option<&ErrorRateReport> {
        self.epochs.last().map(|e| &e.report)
    }

    /// Largest gradient norm seen; non-finite norms count as infinite.
    pub fn max_grad_norm(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| if s.grad_norm.is_finite() { s.grad_norm } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    pub fn median_grad_norm(&self) -> f64 {
        let mut v: Vec<f64> = self
            .steps
            .iter()
            .map(|s| if s.grad_norm.is_finite() { s.grad_norm } else { f64::INFINITY })
            .collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    }

    /// The full metrics stream as written during training.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# step loss grad_norm spike_rate\n");
        if let Some(c) = &self.control {
            writeln!(out, "control {}", c.to_line()).unwrap();
        }
        let mut epochs = self.epochs.iter().peekable();
        for s in &self.steps {
            while let Some(e) = epochs.next_if(|e| e.epoch < s.epoch) {
                writeln!(out, "{}", e.to_line()).unwrap();
            }
            writeln!(out, "{}", s.to_line()).unwrap();
        }
        for e in epochs {
            writeln!(out, "{}", e.to_line()).unwrap();
        }
        if let Some(step) = self.diverged_step {
            writeln!(out, "diverged {step}").unwrap();
        }
        out
    }
}
