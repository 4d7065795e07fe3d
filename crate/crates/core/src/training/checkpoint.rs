use std::fs;
use std::path::Path;

use crate::container;
use crate::error::{Error, Result};
use crate::layers::{EncoderConfig, EncoderParams, Module};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const ENCODER_FILE: &str = "encoder.json";

/// Writes all named tensors to `checkpoint.bin` and the configuration to
/// `encoder.json` inside `dir`.
pub fn save_checkpoint(dir: impl AsRef<Path>, params: &EncoderParams) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    container::save(dir.join(CHECKPOINT_FILE), &params.named_tensors())?;
    let json =
        serde_json::to_string_pretty(&params.config).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(ENCODER_FILE), json + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<EncoderParams> {
    let dir = dir.as_ref();
    let config: EncoderConfig = serde_json::from_str(&fs::read_to_string(dir.join(ENCODER_FILE))?)
        .map_err(|e| Error::Format(format!("{ENCODER_FILE}: {e}")))?;
    let mut params = EncoderParams::init(&config, 0)?;
    params.load_named(&container::load(dir.join(CHECKPOINT_FILE))?)?;
    Ok(params)
}
