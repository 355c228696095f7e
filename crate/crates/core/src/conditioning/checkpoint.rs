use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kbm::KbmParams;

use super::model::{Model, Params};
use super::{ConditioningError, ModelConfig};

pub const CHECKPOINT_FORMAT: &str = "nsplan-weights/1";

/// JSON weight container: trained parameters plus the config that shaped
/// them. Fixed projections are regenerated from `model.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelConfig,
    pub kbm: KbmParams,
    pub params: Params,
}

/// sha256 of the serialized checkpoint, hex.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Model {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model: self.config().clone(),
            kbm: *self.kbm(),
            params: self.params().clone(),
        }
    }

    pub fn to_checkpoint_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self.to_checkpoint_json().as_bytes())
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Model, ConditioningError> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(ConditioningError::Checkpoint(format!(
                "unsupported format {:?}, expected {CHECKPOINT_FORMAT:?}",
                ck.format
            )));
        }
        Model::with_params(ck.model, ck.kbm, ck.params)
    }

    /// Parse a checkpoint and check it was produced under `model` and `kbm`.
    pub fn from_checkpoint_json(text: &str, model: &ModelConfig, kbm: &KbmParams) -> Result<Model, ConditioningError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| ConditioningError::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if &ck.model != model {
            return Err(ConditioningError::shape(
                "model config",
                format!("{model:?}"),
                format!("{:?}", ck.model),
            ));
        }
        if &ck.kbm != kbm {
            return Err(ConditioningError::shape("kbm params", format!("{kbm:?}"), format!("{:?}", ck.kbm)));
        }
        Model::from_checkpoint(ck)
    }

    pub fn save(&self, path: &Path) -> Result<String, ConditioningError> {
        let json = self.to_checkpoint_json();
        fs::write(path, &json)?;
        Ok(fingerprint(json.as_bytes()))
    }

    /// Load a checkpoint under whatever config it records.
    pub fn load_checkpoint(path: &Path) -> Result<Model, ConditioningError> {
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| ConditioningError::Checkpoint(format!("malformed checkpoint: {e}")))?;
        Model::from_checkpoint(ck)
    }

    pub fn load(path: &Path, model: &ModelConfig, kbm: &KbmParams) -> Result<Model, ConditioningError> {
        Model::from_checkpoint_json(&fs::read_to_string(path)?, model, kbm)
    }
}
