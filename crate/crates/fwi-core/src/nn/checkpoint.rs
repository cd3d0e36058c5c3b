//! Checkpoint persistence: `model.json` (spec, weight vector, training
//! metadata) plus `weights.bin` (flat f64le in layout order).

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochStats, Layout, NetworkParams, NetworkSpec, TrainConfig};
use crate::error::{FwiError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub train_config: Option<TrainConfig>,
    pub loss_history: Vec<EpochStats>,
    pub dataset_seed: Option<u64>,
    /// Velocity range of the training family, used downstream to pick
    /// iterate clamps.
    pub velocity_range: Option<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    spec: NetworkSpec,
    param_count: usize,
    #[serde(default)]
    meta: CheckpointMeta,
}

pub fn save_checkpoint(
    dir: &Path,
    params: &NetworkParams,
    spec: &NetworkSpec,
    meta: &CheckpointMeta,
) -> Result<()> {
    let layout = Layout::new(spec);
    if layout.total != params.data.len() {
        return Err(FwiError::IncompatibleCheckpoint(format!(
            "spec implies {} parameters, got {}",
            layout.total,
            params.data.len()
        )));
    }
    fs::create_dir_all(dir)?;
    let model = ModelFile {
        version: CHECKPOINT_VERSION,
        spec: spec.clone(),
        param_count: params.data.len(),
        meta: meta.clone(),
    };
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&model)?)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("weights.bin"))?);
    let mut buf = Vec::with_capacity(params.data.len() * 8);
    for v in &params.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(NetworkParams, NetworkSpec, CheckpointMeta)> {
    let model: ModelFile = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
    if model.version != CHECKPOINT_VERSION {
        return Err(FwiError::UnsupportedVersion(format!(
            "checkpoint version {}",
            model.version
        )));
    }
    model.spec.validate()?;
    let layout = Layout::new(&model.spec);
    if layout.total != model.param_count {
        return Err(FwiError::IncompatibleCheckpoint(format!(
            "spec implies {} parameters, model.json says {}",
            layout.total, model.param_count
        )));
    }
    let mut bytes = Vec::new();
    fs::File::open(dir.join("weights.bin"))?.read_to_end(&mut bytes)?;
    if bytes.len() != layout.total * 8 {
        return Err(FwiError::IncompatibleCheckpoint(format!(
            "weights.bin holds {} bytes, layout implies {}",
            bytes.len(),
            layout.total * 8
        )));
    }
    let mut data = Vec::with_capacity(layout.total);
    for chunk in bytes.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FwiError::IncompatibleCheckpoint(
            "weights contain non-finite values".into(),
        ));
    }
    Ok((NetworkParams { data, layout }, model.spec, model.meta))
}
