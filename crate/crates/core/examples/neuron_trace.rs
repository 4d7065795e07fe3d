//! Integrates one LIF neuron driven by two presynaptic spike trains and a
//! constant bias, and prints its stimulus, membrane potential and spikes.
//!
//! ```text
//! cargo run --example neuron_trace -- [alpha] [bias]
//! ```

use spiking_ctc::autodiff::SurrogateSpec;
use spiking_ctc::layers::simulate_neuron;

fn main() -> spiking_ctc::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let alpha = args.first().copied().unwrap_or(0.9);
    let bias = args.get(1).copied().unwrap_or(0.4);
    let steps = 60;
    let inputs: Vec<Vec<f64>> = (0..steps)
        .map(|t| vec![(t % 7 == 0) as u8 as f64, (t > 20 && t % 3 == 0) as u8 as f64])
        .collect();
    let trace = simulate_neuron(alpha, SurrogateSpec::default(), &[2.0, 1.5], &inputs, bias, -0.5)?;
    println!("t\tI\tu\ts");
    for t in 0..steps {
        let bar = "#".repeat((trace.membrane[t].max(0.0) * 20.0) as usize);
        println!(
            "{t}\t{:.3}\t{:.3}\t{}\t{bar}",
            trace.current[t], trace.membrane[t], trace.spikes[t]
        );
    }
    let n = trace.spikes.iter().filter(|&&s| s == 1.0).count();
    println!("{n} spikes in {steps} steps (rate {:.3})", n as f64 / steps as f64);
    Ok(())
}
