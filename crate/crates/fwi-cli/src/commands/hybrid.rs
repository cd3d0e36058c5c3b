use std::path::Path;

use ndarray::s;
use serde::Serialize;

use super::{default_clamp, load_model, read_field, read_signal, write_field};
use crate::provenance;
use fwi_core::analysis::error_norms;
use fwi_core::inversion::{
    hybrid_reconstruct, BfgsOpts, NetworkInverse, NeumannOpts, WaveForward,
};
use fwi_core::wave::{standard_sources, DataBundle, ReceiverSide};
use fwi_core::{FwiError, Result};

#[derive(Serialize)]
struct HybridMetadata {
    terms: usize,
    bfgs_iterations: usize,
    psi_warm: f64,
    psi_final: f64,
    warm_errors: Option<(f64, f64)>,
    refined_errors: Option<(f64, f64)>,
}

/// The signal must cover the extended battery: seven standard sources,
/// receivers on both sides, with the training view recoverable as the first
/// three sources and the bottom-side receiver block.
pub fn run(
    model: &Path,
    signal: &Path,
    terms: usize,
    bfgs_iters: usize,
    truth: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let loaded = load_model(model)?;
    let g_full = read_signal(signal)?;
    let truth_field = truth.map(read_field).transpose()?;

    let mut grid_full = loaded.grid.clone();
    grid_full.receiver_side = ReceiverSide::Both;
    let n = grid_full.nodes_per_side();
    let (ns, nt, nd) = g_full.data.dim();
    let dims = loaded.spec.input_dims;
    if ns != 7 || nd != 2 * n || nt != dims.nt_rec {
        return Err(FwiError::invalid(format!(
            "hybrid signal must be shaped (7, {}, {}), got ({ns}, {nt}, {nd})",
            dims.nt_rec,
            2 * n
        )));
    }
    if loaded.grid.receiver_side != ReceiverSide::Bottom || dims.ns != 3 {
        return Err(FwiError::invalid(
            "hybrid expects a model trained on 3 sources with bottom receivers",
        ));
    }
    // training view: first 3 sources, bottom receiver block
    let g_warm = DataBundle {
        data: g_full.data.slice(s![0..3, .., 0..n]).to_owned(),
    };

    let fwd_warm = WaveForward::new(loaded.grid.clone(), loaded.sources.clone());
    let fwd_full = WaveForward::new(grid_full, standard_sources(&loaded.grid, 7));
    let clamp = default_clamp(&loaded.meta, &loaded.grid);
    let grid = loaded.grid.clone();
    let op = NetworkInverse::new(loaded.params, loaded.spec, grid.clone())?;

    let mut nopts = NeumannOpts::new(terms);
    nopts.clamp = clamp;
    let bopts = BfgsOpts {
        max_iterations: bfgs_iters,
        grad_tolerance: 1e-12,
        ..Default::default()
    };
    let result = hybrid_reconstruct(&op, &g_warm, &fwd_warm, &g_full, &fwd_full, &nopts, &bopts)?;

    std::fs::create_dir_all(out)?;
    write_field(&out.join("warm.json"), &result.warm_start)?;
    write_field(&out.join("recon.json"), &result.refined)?;
    let warm_errors = truth_field
        .as_ref()
        .map(|t| error_norms(t, &result.warm_start, &grid));
    let refined_errors = truth_field
        .as_ref()
        .map(|t| error_norms(t, &result.refined, &grid));
    let meta = HybridMetadata {
        terms,
        bfgs_iterations: result.bfgs_iterations,
        psi_warm: result.psi_warm,
        psi_final: result.psi_final,
        warm_errors,
        refined_errors,
    };
    std::fs::write(out.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    std::fs::write(
        out.join("timing.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "neumann_seconds": result.neumann_seconds,
            "bfgs_seconds": result.bfgs_seconds,
        }))?,
    )?;
    provenance::write(
        out,
        "hybrid",
        provenance::config_hash(&(terms, bfgs_iters)),
        None,
    )?;
    println!(
        "{}",
        serde_json::json!({
            "warm_start": out.join("warm.json"),
            "reconstruction": out.join("recon.json"),
            "psi_warm": result.psi_warm,
            "psi_final": result.psi_final,
        })
    );
    Ok(())
}
