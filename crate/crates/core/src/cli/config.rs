use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::SurrogateSpec;
use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::training::TrainConfig;

/// Reads a TOML file; unknown keys are errors naming the key. Relative
/// paths inside the file are later resolved against its directory.
pub(crate) fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, PathBuf)> {
    let Some(path) = path else {
        return Ok((T::default(), PathBuf::from(".")));
    };
    let text = fs::read_to_string(path)?;
    let value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((value, base))
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// `gen-data`: a synthetic task split into `train/` and `test/`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataConfig {
    pub train: usize,
    pub test: usize,
    pub synth: SynthSpec,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            train: 2000,
            test: 200,
            synth: SynthSpec::default(),
        }
    }
}

/// `train` and `grid`: data from a `gen-data` directory, or generated in
/// memory from `synthetic` when `data` is absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCommandConfig {
    pub data: Option<PathBuf>,
    pub synthetic: GenDataConfig,
    pub train: TrainConfig,
}

/// `eval`: a checkpoint directory and a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalCommandConfig {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub batch_size: usize,
}

impl Default for EvalCommandConfig {
    fn default() -> Self {
        EvalCommandConfig {
            checkpoint: PathBuf::from("checkpoint"),
            data: PathBuf::from("data/test"),
            batch_size: 64,
        }
    }
}

/// `simulate`: one neuron driven by presynaptic spike trains and a
/// constant bias current.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub steps: usize,
    /// Leak coefficient in `[0, 1]`.
    pub alpha: f64,
    pub threshold: f64,
    /// One weight per presynaptic train.
    pub weights: Vec<f64>,
    /// Spike times (steps) of each presynaptic train.
    pub spike_times: Vec<Vec<usize>>,
    /// Constant stimulus added at every step.
    pub bias: f64,
    /// Self-recurrent weight applied to the previous output spike.
    pub recurrent: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            steps: 100,
            alpha: 0.9,
            threshold: 1.0,
            weights: vec![0.8, 0.6],
            spike_times: vec![vec![5, 7, 9, 11, 13, 40, 41, 42], vec![6, 8, 10, 12, 60, 62, 64, 66, 68]],
            bias: 0.0,
            recurrent: 0.0,
        }
    }
}

impl SimulateConfig {
    pub fn surrogate(&self) -> SurrogateSpec {
        SurrogateSpec {
            threshold: self.threshold,
            ..SurrogateSpec::default()
        }
    }

    /// Dense `[steps][trains]` 0/1 inputs.
    pub fn inputs(&self) -> Result<Vec<Vec<f64>>> {
        if self.spike_times.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "{} spike trains for {} weights",
                self.spike_times.len(),
                self.weights.len()
            )));
        }
        let mut x = vec![vec![0.0; self.weights.len()]; self.steps];
        for (i, train) in self.spike_times.iter().enumerate() {
            for &t in train {
                let row = x.get_mut(t).ok_or_else(|| {
                    Error::Config(format!("spike time {t} beyond {} steps", self.steps))
                })?;
                row[i] = 1.0;
            }
        }
        Ok(x)
    }
}

/// `features`: one WAV file to log-mel features.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesCommandConfig {
    pub input: PathBuf,
    pub features: FeatureConfig,
}
