//! Checkpoint directories.
//!
//! ```text
//! <dir>/checkpoint.txt     resolved config, then seed, epoch and rng cursors
//! <dir>/<param>.sptn       one f32 array per parameter
//! ```
//!
//! The state lines in `checkpoint.txt` are `#`-prefixed so the file also
//! parses as a plain config.

use std::fs;
use std::path::Path;

use egoms_tensor::{sptn, SptnArray};

use crate::config::Config;
use crate::error::{CoreError, Result};
use crate::model::{init_params, ParamStore};

pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub params: ParamStore<f32>,
    pub seed: u64,
    pub epoch: usize,
    pub cursors: Vec<(String, u128)>,
}

pub fn save(
    dir: &Path,
    params: &ParamStore<f32>,
    config: &Config,
    seed: u64,
    epoch: usize,
    cursors: &[(&'static str, u128)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, value) in params.iter() {
        sptn::write(dir.join(format!("{name}.sptn")), &SptnArray::from(value.clone()))?;
    }
    let mut text = config.to_text();
    text.push_str(&format!("#@ seed {seed}\n#@ epoch {epoch}\n"));
    for (name, c) in cursors {
        text.push_str(&format!("#@ cursor {name} {c}\n"));
    }
    fs::write(dir.join(CHECKPOINT_FILE), text)?;
    Ok(())
}

fn state_error(line: &str) -> CoreError {
    CoreError::Data(format!("malformed checkpoint line {line:?}"))
}

/// Reads a checkpoint; parameter names and shapes must match the model its
/// config describes.
pub fn load(dir: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(dir.join(CHECKPOINT_FILE))?;
    let config = Config::parse(&text)?;
    let (mut seed, mut epoch, mut cursors) = (None, None, Vec::new());
    for line in text.lines().filter_map(|l| l.strip_prefix("#@ ")) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["seed", v] => seed = Some(v.parse().map_err(|_| state_error(line))?),
            ["epoch", v] => epoch = Some(v.parse().map_err(|_| state_error(line))?),
            ["cursor", name, v] => cursors.push((name.to_string(), v.parse().map_err(|_| state_error(line))?)),
            _ => return Err(state_error(line)),
        }
    }
    let (Some(seed), Some(epoch)) = (seed, epoch) else {
        return Err(CoreError::Data("checkpoint lacks seed or epoch".into()));
    };
    // The freshly initialized store fixes the expected names and shapes.
    let mut params: ParamStore<f32> = init_params(&config.model_config(), seed)?;
    for (name, value) in params.iter_mut() {
        let loaded = sptn::read(dir.join(format!("{name}.sptn")))?.into_f32()?;
        if loaded.shape() != value.shape() {
            return Err(CoreError::Data(format!(
                "{name}: checkpoint shape {:?}, model expects {:?}",
                loaded.shape(),
                value.shape()
            )));
        }
        *value = loaded;
    }
    Ok(Checkpoint {
        config,
        params,
        seed,
        epoch,
        cursors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = Config::default();
        config.model.stage_channels = [4, 4, 4, 4];
        config.model.hidden = 4;
        let params: ParamStore<f32> = init_params(&config.model_config(), 9).unwrap();
        save(dir.path(), &params, &config, 9, 3, &[("data", 17), ("augment", 5)]).unwrap();
        let ck = load(dir.path()).unwrap();
        assert_eq!(ck.config, config);
        assert_eq!(ck.params, params);
        assert_eq!((ck.seed, ck.epoch), (9, 3));
        assert_eq!(ck.cursors, vec![("data".to_string(), 17), ("augment".to_string(), 5)]);
    }
}
