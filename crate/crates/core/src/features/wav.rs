//! Minimal RIFF/WAVE reader for PCM 16-bit audio.

/// Mono audio with samples scaled to `[-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WavError {
    #[error("malformed WAV header: {0}")]
    Malformed(String),
    #[error("unsupported WAV codec: format tag {format_tag}, {bits_per_sample} bits per sample")]
    UnsupportedCodec {
        format_tag: u16,
        bits_per_sample: u16,
    },
    #[error("truncated WAV data: {declared} bytes declared, {available} present")]
    Truncated { declared: usize, available: usize },
}

const PCM: u16 = 1;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a PCM16 WAV file; multi-channel input keeps only the first channel.
pub fn read_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::Malformed("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(WavError::Malformed(format!("fmt chunk of {size} bytes")));
                }
                let format_tag = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let sample_rate = u32_at(bytes, body + 4);
                let bits_per_sample = u16_at(bytes, body + 14);
                if format_tag != PCM || bits_per_sample != 16 {
                    return Err(WavError::UnsupportedCodec {
                        format_tag,
                        bits_per_sample,
                    });
                }
                if channels == 0 || sample_rate == 0 {
                    return Err(WavError::Malformed(format!(
                        "{channels} channels at {sample_rate} Hz"
                    )));
                }
                format = Some((channels, sample_rate, bits_per_sample));
            }
            b"data" => {
                let (channels, sample_rate, _) = format
                    .ok_or_else(|| WavError::Malformed("data chunk before fmt chunk".into()))?;
                let available = bytes.len() - body;
                if size > available {
                    return Err(WavError::Truncated {
                        declared: size,
                        available,
                    });
                }
                let frame_bytes = 2 * channels as usize;
                let samples = bytes[body..body + size]
                    .chunks_exact(frame_bytes)
                    .map(|frame| i16::from_le_bytes([frame[0], frame[1]]) as f64 / 32768.0)
                    .collect();
                return Ok(AudioClip {
                    samples,
                    sample_rate,
                });
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(WavError::Malformed(
        if format.is_some() { "no data chunk" } else { "no fmt chunk" }.into(),
    ))
}

/// Encodes mono PCM16; samples are clamped to `[-1, 1]` and rounded.
pub fn write_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
