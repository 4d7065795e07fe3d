use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::metrics::RunMetrics;
use super::run::{train_run, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::EncoderConfig;

/// One trained configuration of the replacement grid.
#[derive(Clone, Debug)]
pub struct GridRow {
    /// Number of leading LSTM layers replaced.
    pub replaced: usize,
    pub spiking: bool,
    pub config: TrainConfig,
    pub metrics: RunMetrics,
}

impl GridRow {
    pub fn label(&self) -> String {
        self.config.encoder.label()
    }
}

/// The configurations of the grid derived from `base`: the all-LSTM stack
/// once, then each replacement count with spiking and with nonspiking
/// non-gated layers.
pub fn grid_runs(base: &TrainConfig) -> Result<Vec<(usize, bool, TrainConfig)>> {
    let layers = &base.encoder.layers;
    let first = layers
        .first()
        .ok_or_else(|| Error::Config("grid needs at least one recurrent layer".into()))?;
    let total = layers.len();
    let mut runs = Vec::with_capacity(2 * total + 1);
    for k in 0..=total {
        let variants: &[bool] = if k == 0 { &[false] } else { &[true, false] };
        for &spiking in variants {
            let mut encoder = EncoderConfig::replacement(k, total, first.hidden, spiking);
            encoder.input_dim = base.encoder.input_dim;
            encoder.conv = base.encoder.conv;
            encoder.vocab = base.encoder.vocab;
            encoder.surrogate = base.encoder.surrogate;
            encoder.rnn_activation = base.encoder.rnn_activation;
            encoder.batch_norm = base.encoder.batch_norm;
            encoder.detach_reset = base.encoder.detach_reset;
            for (spec, b) in encoder.layers.iter_mut().zip(layers) {
                spec.hidden = b.hidden;
                spec.bidirectional = b.bidirectional;
            }
            runs.push((k, spiking, TrainConfig { encoder, ..base.clone() }));
        }
    }
    Ok(runs)
}

/// Trains every grid configuration, up to `jobs` at a time. Rows come back
/// in grid order regardless of scheduling; a diverged run is recorded and
/// the grid continues. `on_done` is called as each run finishes.
pub fn replacement_grid(
    base: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    jobs: usize,
    on_done: &(dyn Fn(&GridRow) + Sync),
) -> Result<Vec<GridRow>> {
    let runs = grid_runs(base)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<GridRow>>>> =
        Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, runs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((replaced, spiking, config)) = runs.get(i) else { break };
                let row = train_run(config, train, test).map(|out| GridRow {
                    replaced: *replaced,
                    spiking: *spiking,
                    config: config.clone(),
                    metrics: out.metrics,
                });
                if let Ok(r) = &row {
                    on_done(r);
                }
                results.lock().expect("grid worker panicked")[i] = Some(row);
            });
        }
    });
    results
        .into_inner()
        .expect("grid worker panicked")
        .into_iter()
        .map(|r| r.expect("every run executed"))
        .collect()
}

/// Tab-separated results, one line per run.
pub fn grid_table(rows: &[GridRow]) -> String {
    let mut out = String::from(
        "architecture\tneurons\terror_rate\tinterval_low\tinterval_high\tcontrol_rate\tdiverged\tmax_grad_norm\n",
    );
    for r in rows {
        let neurons = if r.spiking { "spiking" } else { "nonspiking" };
        let (rate, lo, hi) = r.metrics.final_report().map_or_else(
            || ("-".to_string(), "-".to_string(), "-".to_string()),
            |e| (e.rate.to_string(), e.interval_low.to_string(), e.interval_high.to_string()),
        );
        let control = r.metrics.control.map_or_else(|| "-".to_string(), |c| c.rate.to_string());
        writeln!(
            out,
            "{}\t{neurons}\t{rate}\t{lo}\t{hi}\t{control}\t{}\t{}",
            r.label(),
            r.metrics.diverged,
            r.metrics.max_grad_norm()
        )
        .unwrap();
    }
    out
}
