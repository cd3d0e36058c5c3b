use std::path::Path;

use crate::config::{parse_config, GenDataConfig};
use crate::provenance;
use fwi_core::datagen::synthesize;
use fwi_core::Result;

pub fn run(config_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let config: GenDataConfig = parse_config(config_path)?;
    let synth = config.build()?;
    let manifest = synthesize(&synth, seed, out)?;
    provenance::write(out, "gen-data", provenance::config_hash(&config), Some(seed))?;
    println!(
        "{}",
        serde_json::json!({
            "dataset": out,
            "samples": manifest.n_samples,
            "signals_shape": manifest.signals_shape,
            "targets_shape": manifest.targets_shape,
        })
    );
    Ok(())
}
