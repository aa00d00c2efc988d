//! Checkpoints: model parameters, optimizer moments, episode counter, and
//! config hash in one named-tensor container.
//!
//! Values are stored as 32-bit floats by the container; the first
//! save/load pair therefore quantizes parameters once, after which
//! round-trips are bit-exact. The saved artifact — not the in-memory
//! f64 state — is the model of record.

use std::collections::HashMap;
use std::path::Path;

use crate::policy::{ModelDims, ModelParams};
use crate::tensor::{load_named, save_named, Tensor};

use super::optim::{tensor_u64, u64_tensor, Adam, AdamHyper};
use super::{Result, TrainError};

/// Version of the record layout inside the container (the container file
/// format carries its own version independently).
pub const CHECKPOINT_META_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Adam,
    /// Training episodes completed when this checkpoint was taken.
    pub episode: u64,
    /// Hash of the canonical config that produced it.
    pub config_hash: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let named = self.params.named();
        let mut entries: Vec<(String, Tensor)> = named
            .iter()
            .map(|(name, t)| (name.to_string(), (*t).clone()))
            .collect();
        let names: Vec<&'static str> = named.iter().map(|(n, _)| *n).collect();
        entries.extend(self.adam.named_state(&names));
        entries.push(("meta.version".into(), u64_tensor(CHECKPOINT_META_VERSION)));
        entries.push(("meta.episode".into(), u64_tensor(self.episode)));
        entries.push(("meta.config_hash".into(), u64_tensor(self.config_hash)));
        save_named(path, &entries)?;
        Ok(())
    }

    /// Loads and validates a checkpoint. `dims` must describe the saved
    /// model (shapes are checked record by record); `hyper` supplies the
    /// optimizer hyperparameters, which are config-owned and not stored.
    pub fn load(path: &Path, dims: ModelDims, hyper: AdamHyper) -> Result<Self> {
        let entries = load_named(path)?;
        // 17 parameters, 17 + 17 moments, optimizer step, 3 meta records.
        let expected = 17 * 3 + 4;
        if entries.len() != expected {
            return Err(TrainError::Checkpoint(format!(
                "{} records in {}, expected {expected}",
                entries.len(),
                path.display()
            )));
        }
        let map: HashMap<String, Tensor> = entries.into_iter().collect();
        if map.len() != expected {
            return Err(TrainError::Checkpoint("duplicate record names".into()));
        }

        let version = fetch_u64(&map, "meta.version")?;
        if version != CHECKPOINT_META_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_META_VERSION})"
            )));
        }
        let episode = fetch_u64(&map, "meta.episode")?;
        let config_hash = fetch_u64(&map, "meta.config_hash")?;

        let mut params = ModelParams::init(dims, 0);
        for (name, slot) in params.named_mut() {
            let got = map
                .get(name)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing record {name}")))?;
            if got.shape() != slot.shape() {
                return Err(TrainError::Checkpoint(format!(
                    "record {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    slot.shape()
                )));
            }
            *slot = got.clone();
        }
        let adam = Adam::restore(hyper, &params.named(), &map)?;
        Ok(Self {
            params,
            adam,
            episode,
            config_hash,
        })
    }
}

fn fetch_u64(map: &HashMap<String, Tensor>, key: &str) -> Result<u64> {
    map.get(key)
        .ok_or_else(|| TrainError::Checkpoint(format!("missing record {key}")))
        .and_then(tensor_u64)
}
