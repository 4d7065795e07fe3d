//! Writes a synthetic two-tone WAV, reads it back and prints a coarse
//! picture of its log-mel filterbank features.
//!
//! ```text
//! cargo run --example log_mel_features -- [output.wav]
//! ```

use std::f64::consts::TAU;

use spiking_ctc::features::{log_mel, read_wav, write_wav_pcm16, AudioClip, FeatureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rate = 16_000;
    let samples = (0..rate / 2)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let f = if t < 0.25 { 300.0 } else { 2500.0 };
            0.5 * (TAU * f * t).sin()
        })
        .collect();
    let bytes = write_wav_pcm16(&AudioClip {
        samples,
        sample_rate: rate as u32,
    });
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, &bytes)?;
        println!("wrote {path}");
    }
    let clip = read_wav(&bytes)?;
    let config = FeatureConfig::default();
    let feats = log_mel(&clip, &config)?;
    let (frames, bands) = (feats.shape()[0], feats.shape()[1]);
    println!("{frames} frames x {bands} bands; rows every 5th frame, low bands on the left");
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for t in (0..frames).step_by(5) {
        let row = &feats.data()[t * bands..(t + 1) * bands];
        let line: String = row
            .iter()
            .map(|&v| shades[((v + 8.0) / 14.0 * 9.0).clamp(0.0, 9.0) as usize])
            .collect();
        println!("{t:3} |{line}|");
    }
    Ok(())
}
