//! Compares gradient norms of nonspiking, spiking and LSTM encoders trained
//! without clipping on long sequences.
//!
//! ```text
//! cargo run --release --example gradient_explosion -- [steps] [seeds] [lr]
//! ```

use spiking_ctc::training::{gradient_diagnostics, DiagnosticsConfig, DirectionCheck};

fn main() -> spiking_ctc::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let defaults = DiagnosticsConfig::default();
    let config = DiagnosticsConfig {
        steps: args.first().map_or(defaults.steps, |&v| v as usize),
        seeds: (0..args.get(1).map_or(defaults.seeds.len() as u64, |&v| v as u64)).collect(),
        learning_rate: args.get(2).copied().unwrap_or(defaults.learning_rate),
        ..defaults
    };
    println!("variant\tseed\tinitial\tmax\tmedian\tcrossed\tsteps");
    let summaries = gradient_diagnostics(&config)?;
    for s in &summaries {
        println!("{}", s.to_line());
    }
    let check = DirectionCheck::from_summaries(&summaries);
    println!(
        "spiking crossings {}; nonspiking max larger on {}/{} seeds; direction holds: {}",
        check.spiking_crossings,
        check.nonspiking_larger,
        check.seeds,
        check.holds()
    );
    Ok(())
}
