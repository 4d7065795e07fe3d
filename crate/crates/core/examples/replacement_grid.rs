//! Gradually replaces the LSTM layers of a four-layer encoder with spiking
//! or nonspiking non-gated layers and prints the results table.
//!
//! ```text
//! cargo run --release --example replacement_grid -- [epochs] [train] [hidden] [jobs]
//! ```

use spiking_ctc::data::{generate_range, SynthSpec};
use spiking_ctc::layers::EncoderConfig;
use spiking_ctc::training::{grid_table, replacement_grid, TrainConfig};

fn main() -> spiking_ctc::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let arg = |i: usize, default: usize| args.get(i).copied().unwrap_or(default);
    let (epochs, n_train, hidden, jobs) = (arg(0, 5), arg(1, 1000), arg(2, 32), arg(3, 4));

    let spec = SynthSpec {
        seed: 7,
        ..SynthSpec::default()
    };
    let train = generate_range(&spec, 0, n_train)?;
    let test = generate_range(&spec, n_train, 100)?;
    let base = TrainConfig {
        epochs,
        encoder: EncoderConfig::replacement(0, 4, hidden, false),
        ..TrainConfig::default()
    };
    let rows = replacement_grid(&base, &train, &test, jobs, &|row| {
        eprintln!("done: {} spiking={}", row.label(), row.spiking);
    })?;
    print!("{}", grid_table(&rows));
    Ok(())
}
