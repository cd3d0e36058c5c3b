//! Every output directory carries a provenance record: which subcommand ran,
//! a hash of the governing configuration, and the seed. Timestamps are
//! deliberately absent so identical runs produce identical trees.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use fwi_core::Result;

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub version: String,
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).unwrap_or_default();
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write(dir: &Path, command: &str, config_sha256: String, seed: Option<u64>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = Provenance {
        command: command.to_string(),
        config_sha256,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(
        dir.join("provenance.json"),
        serde_json::to_string_pretty(&p)?,
    )?;
    Ok(())
}
