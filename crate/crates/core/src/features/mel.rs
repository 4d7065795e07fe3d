//! Log-mel filterbank features.
//!
//! Frames of `frame_ms` every `hop_ms` are Hamming-windowed, zero-padded to
//! `n_fft`, transformed to a one-sided magnitude spectrum, projected onto
//! triangular filters evenly spaced on the mel scale
//! `m = 2595 log10(1 + f / 700)`, and compressed with `ln(max(x, 1e-10))`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::wav::AudioClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Absolute floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Expected input rate; clips at any other rate are rejected.
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub fmin: f64,
    /// Defaults to the Nyquist frequency.
    pub fmax: Option<f64>,
    pub n_fft: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 16_000,
            frame_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 40,
            fmin: 0.0,
            fmax: None,
            n_fft: 512,
        }
    }
}

impl FeatureConfig {
    pub fn frame_len(&self) -> usize {
        (self.sample_rate as f64 * self.frame_ms / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let fmax = self.fmax();
        if self.sample_rate == 0 || self.n_mels == 0 || self.frame_len() == 0 || self.hop_len() == 0 {
            return Err(Error::invalid(format!("degenerate feature config {self:?}")));
        }
        if !(0.0 <= self.fmin && self.fmin < fmax && fmax <= nyquist) {
            return Err(Error::invalid(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got {} and {fmax}",
                self.fmin
            )));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < self.frame_len() {
            return Err(Error::invalid(format!(
                "n_fft {} must be a power of two >= frame length {}",
                self.n_fft,
                self.frame_len()
            )));
        }
        Ok(())
    }

    /// Number of frames for `n` samples.
    pub fn frame_count(&self, n: usize) -> usize {
        let win = self.frame_len();
        if n < win {
            0
        } else {
            (n - win) / self.hop_len() + 1
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Filter edge frequencies: `n_mels + 2` points evenly spaced in mel.
/// Filter `j` rises from point `j`, peaks at `j + 1` and falls to `j + 2`.
pub fn mel_points(config: &FeatureConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax()));
    let steps = config.n_mels + 1;
    (0..=steps)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / steps as f64))
        .collect()
}

/// Peak frequency of each filter.
pub fn center_frequencies(config: &FeatureConfig) -> Vec<f64> {
    let points = mel_points(config);
    points[1..=config.n_mels].to_vec()
}

/// Triangular filter weights, `n_mels` rows by `n_fft / 2 + 1` columns.
pub fn mel_filterbank(config: &FeatureConfig) -> Vec<Vec<f64>> {
    let points = mel_points(config);
    let bins = config.n_fft / 2 + 1;
    let bin_hz = config.sample_rate as f64 / config.n_fft as f64;
    (0..config.n_mels)
        .map(|j| {
            let (left, center, right) = (points[j], points[j + 1], points[j + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rising = (f - left) / (center - left);
                    let falling = (right - f) / (right - center);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// One-sided magnitude spectrum of `frame` zero-padded to `n_fft`.
pub fn magnitude_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf: Vec<Complex<f64>> = (0..n_fft)
        .map(|i| Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fft.process(&mut buf);
    buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect()
}

/// Log-mel features `[frames, n_mels]`.
pub fn log_mel(clip: &AudioClip, config: &FeatureConfig) -> Result<Tensor> {
    config.validate()?;
    if clip.sample_rate != config.sample_rate {
        return Err(Error::invalid(format!(
            "clip sample rate {} differs from configured {} (no resampling)",
            clip.sample_rate, config.sample_rate
        )));
    }
    let frames = config.frame_count(clip.samples.len());
    if frames == 0 {
        return Err(Error::invalid(format!(
            "clip of {} samples is shorter than one {}-sample frame",
            clip.samples.len(),
            config.frame_len()
        )));
    }
    let (win, hop) = (config.frame_len(), config.hop_len());
    let window = hamming(win);
    let bank = mel_filterbank(config);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(config.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); config.n_fft];
    let mut out = Vec::with_capacity(frames * config.n_mels);
    for f in 0..frames {
        let start = f * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < win {
                Complex::new(clip.samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..config.n_fft / 2 + 1].iter().map(|c| c.norm()).collect();
        for row in &bank {
            let energy: f64 = row.iter().zip(&mag).map(|(w, m)| w * m).sum();
            out.push(energy.max(LOG_FLOOR).ln());
        }
    }
    Tensor::new(vec![frames, config.n_mels], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_dft_magnitude(frame: &[f64], n_fft: usize) -> Vec<f64> {
        (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &x) in frame.iter().enumerate() {
                    let phase = -std::f64::consts::TAU * (k * n) as f64 / n_fft as f64;
                    re += x * phase.cos();
                    im += x * phase.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_dft() {
        let frame: Vec<f64> = (0..300).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let a = magnitude_spectrum(&frame, 512);
        let b = direct_dft_magnitude(&frame, 512);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8 * y.max(1.0));
        }
    }

    #[test]
    fn exact_bin_tone_concentrates_energy() {
        let n = 256;
        let k = 19;
        let tone: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * (k * i) as f64 / n as f64).cos())
            .collect();
        let mag = magnitude_spectrum(&tone, n);
        let total: f64 = mag.iter().map(|m| m * m).sum();
        assert!(mag[k] * mag[k] / total >= 0.99);
    }

    #[test]
    fn frame_count_formula() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.frame_len(), 400);
        assert_eq!(cfg.hop_len(), 160);
        let clip = AudioClip {
            samples: vec![0.0; 400 + 160 * 9],
            sample_rate: 16_000,
        };
        let feats = log_mel(&clip, &cfg).unwrap();
        assert_eq!(feats.shape(), &[10, 40]);
        assert!(feats.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn short_clip_and_rate_mismatch_rejected() {
        let cfg = FeatureConfig::default();
        let short = AudioClip {
            samples: vec![0.0; 399],
            sample_rate: 16_000,
        };
        assert!(log_mel(&short, &cfg).is_err());
        let wrong_rate = AudioClip {
            samples: vec![0.0; 4000],
            sample_rate: 8_000,
        };
        assert!(log_mel(&wrong_rate, &cfg).is_err());
    }

    #[test]
    fn filterbank_has_no_interior_holes() {
        let cfg = FeatureConfig::default();
        let bank = mel_filterbank(&cfg);
        let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
        for k in 0..=cfg.n_fft / 2 {
            let f = k as f64 * bin_hz;
            let total: f64 = bank.iter().map(|row| row[k]).sum();
            assert!(bank.iter().all(|row| row[k] >= 0.0));
            if f > cfg.fmin && f < cfg.fmax() {
                assert!(total > 0.0, "hole at bin {k} ({f} Hz)");
            }
        }
    }

    #[test]
    fn tone_at_filter_center_peaks_in_that_filter() {
        let cfg = FeatureConfig::default();
        let centers = center_frequencies(&cfg);
        for j in [5usize, 12, 20, 30, 38] {
            let f0 = centers[j];
            let samples: Vec<f64> = (0..8000)
                .map(|i| 0.5 * (std::f64::consts::TAU * f0 * i as f64 / 16_000.0).sin())
                .collect();
            let clip = AudioClip {
                samples,
                sample_rate: 16_000,
            };
            let feats = log_mel(&clip, &cfg).unwrap();
            let frames = feats.shape()[0];
            let mean: Vec<f64> = (0..cfg.n_mels)
                .map(|m| (0..frames).map(|t| feats.at(&[t, m]).exp()).sum::<f64>())
                .collect();
            let best = (0..cfg.n_mels).max_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap();
            assert_eq!(best, j);
        }
    }
}
