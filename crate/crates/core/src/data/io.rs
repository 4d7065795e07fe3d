use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, SynthSpec, Utterance};
use crate::container;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_FILE: &str = "features.bin";
pub const TARGETS_FILE: &str = "targets.txt";

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    count: usize,
    feature_dim: usize,
    synthetic: Option<SynthSpec>,
}

fn utterance_name(i: usize) -> String {
    format!("utt{i:06}")
}

/// Writes `manifest.json`, `features.bin` and `targets.txt` into `dir`.
pub fn save_dataset(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        version: FORMAT_VERSION,
        count: dataset.len(),
        feature_dim: dataset.feature_dim().unwrap_or(0),
        synthetic: dataset.spec.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;

    let entries: Vec<_> = dataset
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| (utterance_name(i), u.features.clone()))
        .collect();
    container::save(dir.join(FEATURES_FILE), &entries)?;

    let mut targets = String::new();
    for u in &dataset.utterances {
        let line: Vec<String> = u.tokens.iter().map(usize::to_string).collect();
        targets.push_str(&line.join(" "));
        targets.push('\n');
    }
    fs::write(dir.join(TARGETS_FILE), targets)?;
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)
        .map_err(|e| Error::Format(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "dataset version {} not supported",
            manifest.version
        )));
    }
    let features = container::load(dir.join(FEATURES_FILE))?;
    let targets_text = fs::read_to_string(dir.join(TARGETS_FILE))?;
    let targets: Vec<&str> = targets_text.lines().collect();
    if features.len() != manifest.count || targets.len() != manifest.count {
        return Err(Error::Format(format!(
            "manifest declares {} utterances, found {} feature tensors and {} target lines",
            manifest.count,
            features.len(),
            targets.len()
        )));
    }
    let mut utterances = Vec::with_capacity(manifest.count);
    for (i, ((name, t), line)) in features.into_iter().zip(targets).enumerate() {
        if name != utterance_name(i) || t.ndim() != 2 || t.shape()[1] != manifest.feature_dim {
            return Err(Error::Format(format!(
                "entry {i}: unexpected tensor {name} with shape {:?}",
                t.shape()
            )));
        }
        let tokens = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| Error::Format(format!("{TARGETS_FILE} line {}: bad token {tok:?}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        utterances.push(Utterance { features: t, tokens });
    }
    Ok(Dataset {
        spec: manifest.synthetic,
        utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            feature_dim: 5,
            seed: 3,
            ..SynthSpec::default()
        };
        let d = generate_synthetic(&spec, 7).unwrap();
        save_dataset(dir.path(), &d).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn mismatched_targets_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_synthetic(&SynthSpec::default(), 3).unwrap();
        save_dataset(dir.path(), &d).unwrap();
        fs::write(dir.path().join(TARGETS_FILE), "1 2\n3\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
        fs::write(dir.path().join(TARGETS_FILE), "1 2\n3\n0\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}
