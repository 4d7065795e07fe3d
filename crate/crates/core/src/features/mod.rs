//! Audio ingestion: 16-bit PCM WAV parsing and log-mel filterbank features.

pub mod mel;
pub mod wav;

pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, FeatureConfig};
pub use wav::{read_wav, write_wav_pcm16, AudioClip, WavError};
