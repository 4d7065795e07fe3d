//! Seeded synthetic transcription task, batch padding and the on-disk
//! dataset layout.
//!
//! Each token `1..=vocab` owns a Gaussian prototype vector. An utterance is a
//! random token sequence; every token emits a block of frames equal to its
//! prototype plus isotropic noise, and blocks are separated by short runs of
//! silent (noise-only) frames.

mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::tensor::Tensor;

pub use io::{load_dataset, save_dataset, FEATURES_FILE, MANIFEST_FILE, TARGETS_FILE};

/// Multiplier mixing the utterance index into its seed.
const UTTERANCE_STRIDE: u64 = 0x5851_F42D_4C95_7F2D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Number of tokens, excluding the blank.
    pub vocab: usize,
    /// Inclusive range of tokens per utterance.
    pub tokens: [usize; 2],
    /// Inclusive range of frames emitted per token.
    pub frames_per_token: [usize; 2],
    /// Inclusive range of silent frames before each token and after the last.
    pub gap_frames: [usize; 2],
    pub feature_dim: usize,
    /// Standard deviation of the per-frame noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab: 8,
            tokens: [2, 6],
            frames_per_token: [4, 8],
            gap_frames: [1, 2],
            feature_dim: 40,
            noise: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [usize; 2]| r[0] <= r[1];
        if self.vocab == 0
            || self.feature_dim == 0
            || self.tokens[0] == 0
            || self.frames_per_token[0] == 0
            || !range_ok(self.tokens)
            || !range_ok(self.frames_per_token)
            || !range_ok(self.gap_frames)
        {
            return Err(Error::Config(format!(
                "synthetic spec needs positive sizes and nonempty ranges: {self:?}"
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Config(format!("noise {} must be finite and >= 0", self.noise)));
        }
        Ok(())
    }

    /// Token prototypes `[vocab, feature_dim]`; row `k - 1` belongs to token `k`.
    pub fn prototypes(&self) -> Tensor {
        let mut rng = Xoshiro256::seed_from_u64(self.seed);
        let mut t = Tensor::zeros(&[self.vocab, self.feature_dim]);
        t.data_mut().iter_mut().for_each(|v| *v = rng.normal());
        t
    }

    /// Seed of utterance `index`.
    pub fn utterance_seed(&self, index: usize) -> u64 {
        self.seed ^ UTTERANCE_STRIDE.wrapping_mul(index as u64 + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    /// `[frames, feature_dim]`.
    pub features: Tensor,
    /// Token ids in `1..=vocab`.
    pub tokens: Vec<usize>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Generator settings, when the data is synthetic.
    pub spec: Option<SynthSpec>,
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.utterances.first().map(Utterance::feature_dim)
    }
}

/// Generates utterances `0..count`.
pub fn generate_synthetic(spec: &SynthSpec, count: usize) -> Result<Dataset> {
    generate_range(spec, 0, count)
}

/// Generates utterances `start..start + count`. Disjoint ranges of the same
/// spec share prototypes, which makes them train/test splits of one task.
pub fn generate_range(spec: &SynthSpec, start: usize, count: usize) -> Result<Dataset> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let prototypes = spec.prototypes();
    let utterances = (start..start + count)
        .map(|i| synth_utterance(spec, &prototypes, i))
        .collect();
    Ok(Dataset {
        spec: Some(spec.clone()),
        utterances,
    })
}

/// Builds one utterance from an explicit token sequence and block layout:
/// `blocks[j]` frames of token `tokens[j]`, each preceded by `gaps[j]` silent
/// frames, followed by `gaps[tokens.len()]` trailing silent frames.
pub fn render_utterance(
    spec: &SynthSpec,
    prototypes: &Tensor,
    tokens: &[usize],
    blocks: &[usize],
    gaps: &[usize],
    rng: &mut Xoshiro256,
) -> Utterance {
    assert_eq!(tokens.len(), blocks.len());
    assert_eq!(gaps.len(), tokens.len() + 1);
    let dim = spec.feature_dim;
    let frames = blocks.iter().sum::<usize>() + gaps.iter().sum::<usize>();
    let mut data = Vec::with_capacity(frames * dim);
    let emit = |proto: Option<&[f64]>, n: usize, data: &mut Vec<f64>, rng: &mut Xoshiro256| {
        for _ in 0..n {
            for f in 0..dim {
                let mean = proto.map_or(0.0, |p| p[f]);
                data.push(mean + spec.noise * rng.normal());
            }
        }
    };
    for (j, (&tok, &len)) in tokens.iter().zip(blocks).enumerate() {
        emit(None, gaps[j], &mut data, rng);
        let row = &prototypes.data()[(tok - 1) * dim..tok * dim];
        emit(Some(row), len, &mut data, rng);
    }
    emit(None, gaps[tokens.len()], &mut data, rng);
    Utterance {
        features: Tensor::new(vec![frames, dim], data).expect("nonempty utterance"),
        tokens: tokens.to_vec(),
    }
}

fn synth_utterance(spec: &SynthSpec, prototypes: &Tensor, index: usize) -> Utterance {
    let mut rng = Xoshiro256::seed_from_u64(spec.utterance_seed(index));
    let n = rng.range_inclusive(spec.tokens[0], spec.tokens[1]);
    let tokens: Vec<usize> = (0..n).map(|_| 1 + rng.below(spec.vocab)).collect();
    let blocks: Vec<usize> = (0..n)
        .map(|_| rng.range_inclusive(spec.frames_per_token[0], spec.frames_per_token[1]))
        .collect();
    let gaps: Vec<usize> = (0..=n)
        .map(|_| rng.range_inclusive(spec.gap_frames[0], spec.gap_frames[1]))
        .collect();
    render_utterance(spec, prototypes, &tokens, &blocks, &gaps, &mut rng)
}

/// Zero-padded batch of utterances.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    /// `[batch, t_max, dim]`; frames past `frame_lengths[i]` are zero.
    pub features: Tensor,
    pub frame_lengths: Vec<usize>,
    pub targets: Vec<Vec<usize>>,
    pub target_lengths: Vec<usize>,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.frame_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_lengths.is_empty()
    }
}

pub fn pad_batch(items: &[&Utterance]) -> Result<PaddedBatch> {
    let first = items.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let dim = first.feature_dim();
    if let Some(bad) = items.iter().find(|u| u.feature_dim() != dim) {
        return Err(Error::ShapeMismatch {
            op: "pad_batch",
            lhs: first.features.shape().to_vec(),
            rhs: bad.features.shape().to_vec(),
        });
    }
    let t_max = items.iter().map(|u| u.frames()).max().unwrap_or(0);
    let mut data = vec![0.0; items.len() * t_max * dim];
    for (u, chunk) in items.iter().zip(data.chunks_mut(t_max * dim)) {
        chunk[..u.features.numel()].copy_from_slice(u.features.data());
    }
    Ok(PaddedBatch {
        features: Tensor::new(vec![items.len(), t_max, dim], data)?,
        frame_lengths: items.iter().map(|u| u.frames()).collect(),
        targets: items.iter().map(|u| u.tokens.clone()).collect(),
        target_lengths: items.iter().map(|u| u.tokens.len()).collect(),
    })
}

/// Inverse of [`pad_batch`].
pub fn unpad(batch: &PaddedBatch) -> Vec<Utterance> {
    let shape = batch.features.shape();
    let (t_max, dim) = (shape[1], shape[2]);
    batch
        .frame_lengths
        .iter()
        .zip(&batch.targets)
        .enumerate()
        .map(|(i, (&len, tokens))| {
            let start = i * t_max * dim;
            let data = batch.features.data()[start..start + len * dim].to_vec();
            Utterance {
                features: Tensor::new(vec![len, dim], data).expect("valid lengths"),
                tokens: tokens.clone(),
            }
        })
        .collect()
}
