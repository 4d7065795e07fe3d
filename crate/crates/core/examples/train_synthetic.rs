//! Trains an all-spiking bidirectional encoder on the synthetic task and
//! compares its test token error rate with the untrained control.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [epochs] [train] [test] [lr] [momentum]
//! ```

use std::time::Instant;

use spiking_ctc::data::{generate_range, SynthSpec};
use spiking_ctc::layers::EncoderConfig;
use spiking_ctc::training::{train_run_with, TrainConfig};

fn main() -> spiking_ctc::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let arg = |i: usize, default: f64| args.get(i).copied().unwrap_or(default);
    let epochs = arg(0, 10.0) as usize;
    let n_train = arg(1, 2000.0) as usize;
    let n_test = arg(2, 200.0) as usize;

    let spec = SynthSpec {
        seed: 2024,
        ..SynthSpec::default()
    };
    let train = generate_range(&spec, 0, n_train)?;
    let test = generate_range(&spec, n_train, n_test)?;

    let config = TrainConfig {
        epochs,
        learning_rate: arg(3, TrainConfig::default().learning_rate),
        momentum: arg(4, 0.0),
        encoder: EncoderConfig::replacement(2, 2, 64, true),
        ..TrainConfig::default()
    };
    println!("{} ({} epochs, {} train, {} test)", config.encoder.label(), epochs, n_train, n_test);
    let start = Instant::now();
    let outcome = train_run_with(&config, &train, &test, &mut |line| {
        if !line.starts_with(|c: char| c.is_ascii_digit()) {
            println!("{line}");
        }
    })?;
    let m = &outcome.metrics;
    let control = m.control.expect("control evaluated").rate;
    if let Some(last) = m.final_report() {
        println!(
            "control {:.4}  final {:.4} [{:.4}, {:.4}]  ratio {:.3}  diverged {}  {:.1}s",
            control,
            last.rate,
            last.interval_low,
            last.interval_high,
            last.rate / control,
            m.diverged,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
