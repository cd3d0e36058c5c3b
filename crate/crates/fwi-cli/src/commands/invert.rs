use std::path::Path;

use serde::Serialize;

use super::{default_clamp, load_model, parse_clamp, read_field, read_signal, write_field};
use crate::provenance;
use fwi_core::analysis::{emit_report, error_norms, NeumannRow, Report, ReportFormat};
use fwi_core::inversion::{neumann_reconstruct, NetworkInverse, NeumannOpts, WaveForward};
use fwi_core::{FwiError, Result};

#[derive(Serialize)]
struct InvertMetadata {
    terms: usize,
    gamma: f64,
    clamp: Option<[f64; 2]>,
    clamp_events: usize,
    errors: Option<Vec<NeumannRow>>,
}

pub fn run(
    model: &Path,
    signal: &Path,
    terms: usize,
    truth: Option<&Path>,
    out: &Path,
    clamp_flag: Option<&str>,
) -> Result<()> {
    if terms == 0 {
        return Err(FwiError::invalid("terms must be >= 1"));
    }
    let loaded = load_model(model)?;
    let g = read_signal(signal)?;
    let truth_field = truth.map(read_field).transpose()?;

    let clamp = match clamp_flag {
        Some(text) => Some(parse_clamp(text)?),
        None => default_clamp(&loaded.meta, &loaded.grid),
    };
    let grid = loaded.grid.clone();
    let wf = WaveForward::new(grid.clone(), loaded.sources.clone());
    let op = NetworkInverse::new(loaded.params, loaded.spec, grid.clone())?;

    let mut opts = NeumannOpts::new(terms).keeping_iterates();
    opts.clamp = clamp;
    let result = neumann_reconstruct(&op, &g, &wf, &opts)?;

    std::fs::create_dir_all(out)?;
    write_field(&out.join("recon.json"), &result.field)?;

    let errors = truth_field.as_ref().map(|t| {
        result
            .iterates
            .iter()
            .enumerate()
            .map(|(j, it)| {
                let (l2, linf) = error_norms(t, it, &grid);
                NeumannRow {
                    j: j + 1,
                    l2_error: l2,
                    linf_error: linf,
                    cpu_seconds: result.seconds_per_term[j],
                }
            })
            .collect::<Vec<_>>()
    });
    if let Some(rows) = &errors {
        emit_report(
            &Report::Neumann { rows: rows.clone() },
            &out.join("errors.csv"),
            ReportFormat::Csv,
        )?;
    }
    let meta = InvertMetadata {
        terms,
        gamma: 0.0,
        clamp,
        clamp_events: result.clamp_events,
        errors,
    };
    std::fs::write(out.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    // timings vary run to run; kept apart from the deterministic artifacts
    std::fs::write(
        out.join("timing.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "seconds_per_term": result.seconds_per_term,
        }))?,
    )?;
    provenance::write(out, "invert", provenance::config_hash(&(terms, clamp)), None)?;
    println!(
        "{}",
        serde_json::json!({"reconstruction": out.join("recon.json"), "terms": terms})
    );
    Ok(())
}
