//! Error rates with 95% equal-tailed Beta-posterior credible intervals.
//!
//! ```text
//! cargo run --example credible_intervals -- [errors] [trials]
//! ```

use spiking_ctc::loss::{credible_interval, ErrorRateReport, Prior};

fn main() -> spiking_ctc::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if let [k, n, ..] = args[..] {
        let r = ErrorRateReport::new(k, n)?;
        println!(
            "{k}/{n}: rate {:.4}, 95% interval [{:.4}, {:.4}], half-width {:.4}",
            r.rate,
            r.interval_low,
            r.interval_high,
            r.half_width()
        );
        return Ok(());
    }
    println!("rate\tn\tlow\thigh\thalf-width\t(uniform prior)");
    for n in [100, 1_000, 7_193, 52_576] {
        for rate in [0.05, 0.17] {
            let k = (rate * n as f64).round() as usize;
            let (lo, hi) = credible_interval(k, n, 0.95, Prior::Uniform)?;
            println!("{rate}\t{n}\t{lo:.5}\t{hi:.5}\t{:.5}", 0.5 * (hi - lo));
        }
    }
    let (lo, hi) = credible_interval(0, 20, 0.95, Prior::Jeffreys)?;
    println!("0/20 under a Jeffreys prior: [{lo:.5}, {hi:.5}]");
    Ok(())
}
