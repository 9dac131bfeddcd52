//! Checkpoints bundle everything a later process needs to reproduce a model:
//! weights by name, the frozen embedding provider, per-scale codebooks, the
//! memory bank, and the run configuration. Stored as JSON; f64 values
//! round-trip bit-exactly.

use crate::config::RunConfig;
use crate::embed::Provider;
use crate::error::{Result, StatError};
use crate::model::{MemoryBank, StatModel, SCALES};
use crate::symbolic::Codebook;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub run: RunConfig,
    pub channels: usize,
    pub description: String,
    pub params: Vec<SavedParam>,
    pub provider: Provider,
    pub codebooks: [Vec<Codebook>; SCALES],
    pub bank: MemoryBank,
    pub router_bias: Vec<f64>,
    /// Digest of the live store at capture time; verified on restore.
    pub value_hash: u64,
}

impl Checkpoint {
    pub fn capture(
        model: &StatModel,
        run: &RunConfig,
        provider: &Provider,
        codebooks: &[Vec<Codebook>; SCALES],
        description: &str,
    ) -> Checkpoint {
        let params = model
            .store
            .iter()
            .map(|(_, p)| SavedParam {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().to_vec(),
                trainable: p.trainable,
            })
            .collect();
        Checkpoint {
            run: run.clone(),
            channels: model.cfg.channels,
            description: description.to_string(),
            params,
            provider: provider.clone(),
            codebooks: codebooks.clone(),
            bank: model.bank.clone(),
            router_bias: model.router.bias.data().to_vec(),
            value_hash: model.store.value_hash(),
        }
    }

    /// Rebuild the model skeleton from the stored config and pour the saved
    /// weights back in. The digest guards against silent drift.
    pub fn restore(&self) -> Result<StatModel> {
        let cfg = self.run.model(self.channels)?;
        let mut model = StatModel::new(cfg, self.run.ablation, self.run.seed)?;
        for saved in &self.params {
            let id = model.store.find(&saved.name).ok_or_else(|| {
                StatError::Load(format!("checkpoint param '{}' has no slot", saved.name))
            })?;
            if model.store.value(id).shape() != saved.shape.as_slice() {
                return Err(StatError::Load(format!(
                    "checkpoint param '{}' has shape {:?}, expected {:?}",
                    saved.name,
                    saved.shape,
                    model.store.value(id).shape()
                )));
            }
            model
                .store
                .set_value(id, Tensor::new(&saved.shape, saved.data.clone())?);
        }
        if model.store.value_hash() != self.value_hash {
            return Err(StatError::Load(
                "restored weights do not match the checkpoint digest".into(),
            ));
        }
        if model.router.bias.data() != self.router_bias.as_slice() {
            return Err(StatError::Load("router bias drifted".into()));
        }
        model.bank = self.bank.clone();
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| StatError::Contract(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| StatError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let json = std::fs::read_to_string(path).map_err(|e| StatError::io(path, e))?;
        serde_json::from_str(&json)
            .map_err(|e| StatError::Load(format!("{}: {e}", path.display())))
    }
}
