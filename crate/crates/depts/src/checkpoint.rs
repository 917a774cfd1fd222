//! Versioned model checkpoints.
//!
//! Checkpoints are JSON documents wrapping a [`TrainedModel`] with a format
//! version. Floats print in shortest round-trip form, so a
//! serialize → parse → serialize cycle is byte-identical — the determinism
//! contract for retraining rests on that.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_atomic};
use crate::train::TrainedModel;

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: TrainedModel,
}

/// Serializes a model as a versioned checkpoint document.
pub fn checkpoint_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    let doc = Checkpoint { version: CHECKPOINT_VERSION, model: model.clone() };
    let mut bytes = serde_json::to_vec_pretty(&doc)
        .map_err(|e| Error::Data(format!("cannot encode checkpoint: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parses and validates a checkpoint from raw bytes.
///
/// This is the single entry point for untrusted checkpoint bytes, shared by
/// [`load_checkpoint`] and the fuzz harness: it must reject structurally
/// inconsistent models, never panic.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    let doc: Checkpoint = serde_json::from_slice(bytes)
        .map_err(|e| Error::Data(format!("malformed checkpoint: {e}")))?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "checkpoint version {} is not the supported {CHECKPOINT_VERSION}",
            doc.version
        )));
    }
    let model = doc.model;
    model.params.validate()?;
    model.config.validate()?;
    if model.series_ids.len() != model.periodicity.len()
        || model.series_ids.len() != model.params.alpha.len()
    {
        return Err(Error::Data(format!(
            "checkpoint is inconsistent: {} series ids, {} periodicity entries, {} scales",
            model.series_ids.len(),
            model.periodicity.len(),
            model.params.alpha.len()
        )));
    }
    if model.params.lookback != model.config.lookback()
        || model.params.horizon != model.config.horizon
        || model.params.width != model.config.width
        || model.params.layers.len() != model.config.layers
    {
        return Err(Error::Data(
            "checkpoint is inconsistent: network shape disagrees with its config".into(),
        ));
    }
    for (id, p) in model.series_ids.iter().zip(&model.periodicity) {
        if *id != p.series_id {
            return Err(Error::Data(format!(
                "checkpoint is inconsistent: periodicity for '{}' listed under '{id}'",
                p.series_id
            )));
        }
        let (coeffs, _) = p.into_parts();
        if !coeffs.a0.is_finite()
            || coeffs.atoms.iter().any(|a| {
                !a.amplitude.is_finite() || !a.frequency.is_finite() || !a.phase.is_finite()
            })
        {
            return Err(Error::Data(format!("checkpoint holds non-finite periodicity for '{id}'")));
        }
    }
    for loss in [model.initial_loss, model.final_loss].into_iter().flatten() {
        if !loss.is_finite() {
            return Err(Error::Data("checkpoint holds a non-finite loss summary".into()));
        }
    }
    Ok(model)
}

/// Writes a checkpoint file atomically.
pub fn save_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(model)?)
}

/// Reads and validates a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    parse_checkpoint(&read_bytes(path)?)
}
