use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{default_clamp, load_model, read_field, read_signal};
use crate::config::parse_config;
use crate::provenance;
use fwi_core::analysis::{
    argmin_surface, emit_report, line_scan, local_minima_count_line,
    local_minima_count_surface, location_scan, BaseRule, BumpTemplate, ObjectiveKind, Report,
    ReportFormat, ScanRow, ScanSpec, SurfaceRow,
};
use fwi_core::inversion::{ForwardOperator, NetworkInverse, WaveForward};
use fwi_core::{FwiError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScanConfig {
    /// Objective values along one cosine-mode direction through a base model.
    Line {
        kind: ObjectiveKind,
        mode: [usize; 2],
        range: [f64; 2],
        samples: usize,
        #[serde(default = "default_base")]
        base: BaseRule,
        /// Mesh-field tensor of the true model.
        truth_field: String,
        /// Signal tensor; synthesized noiselessly from the truth if absent.
        #[serde(default)]
        signal: Option<String>,
    },
    /// Both objectives over a grid of bump-center locations.
    Location {
        template: BumpTemplate,
        x_range: [f64; 2],
        z_range: [f64; 2],
        nx: usize,
        nz: usize,
        truth_center: [f64; 2],
        #[serde(default)]
        signal: Option<String>,
    },
}

fn default_base() -> BaseRule {
    BaseRule::Identity
}

fn linspace(range: [f64; 2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1).max(1) as f64)
        .collect()
}

pub fn run(model: &Path, scan_path: &Path, out: &Path) -> Result<()> {
    let scan: ScanConfig = parse_config(scan_path)?;
    let loaded = load_model(model)?;
    let grid = loaded.grid.clone();
    let wf = WaveForward::new(grid.clone(), loaded.sources.clone());
    let clamp = default_clamp(&loaded.meta, &loaded.grid);
    let op = NetworkInverse::new(loaded.params, loaded.spec, grid.clone())?;
    std::fs::create_dir_all(out)?;

    match &scan {
        ScanConfig::Line {
            kind,
            mode,
            range,
            samples,
            base,
            truth_field,
            signal,
        } => {
            let truth = read_field(&resolve(scan_path, truth_field))?;
            let g = match signal {
                Some(p) => read_signal(&resolve(scan_path, p))?,
                None => wf.apply(&truth)?,
            };
            let spec = ScanSpec {
                mode: *mode,
                range: *range,
                samples: *samples,
                base: *base,
            };
            let values = line_scan(*kind, &g, &truth, &spec, &op, &wf, clamp)?;
            let rows: Vec<ScanRow> = values
                .iter()
                .map(|&(h, value)| ScanRow { h, value })
                .collect();
            emit_report(
                &Report::Scan { rows: rows.clone() },
                &out.join("scan.csv"),
                ReportFormat::Csv,
            )?;
            emit_report(
                &Report::Scan { rows },
                &out.join("scan.json"),
                ReportFormat::Json,
            )?;
            let minima =
                local_minima_count_line(&values.iter().map(|v| v.1).collect::<Vec<_>>());
            std::fs::write(
                out.join("summary.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "kind": kind,
                    "mode": mode,
                    "local_minima": minima,
                }))?,
            )?;
        }
        ScanConfig::Location {
            template,
            x_range,
            z_range,
            nx,
            nz,
            truth_center,
            signal,
        } => {
            if *nx < 3 || *nz < 3 {
                return Err(FwiError::invalid("location scans need at least 3x3 samples"));
            }
            let truth = template.field(truth_center[0], truth_center[1], &grid)?;
            let g = match signal {
                Some(p) => read_signal(&resolve(scan_path, p))?,
                None => wf.apply(&truth)?,
            };
            let xs = linspace(*x_range, *nx);
            let zs = linspace(*z_range, *nz);
            let (psi, phi) = location_scan(&g, template, &xs, &zs, &op, &wf)?;
            let mut rows = Vec::with_capacity(nx * nz);
            for (r, &z) in zs.iter().enumerate() {
                for (c, &x) in xs.iter().enumerate() {
                    rows.push(SurfaceRow {
                        x,
                        z,
                        psi: psi[[r, c]],
                        phi: phi[[r, c]],
                    });
                }
            }
            emit_report(
                &Report::Surface { rows: rows.clone() },
                &out.join("surface.csv"),
                ReportFormat::Csv,
            )?;
            emit_report(
                &Report::Surface { rows },
                &out.join("surface.json"),
                ReportFormat::Json,
            )?;
            let (pr, pc) = argmin_surface(&phi);
            std::fs::write(
                out.join("summary.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "psi_local_minima": local_minima_count_surface(&psi),
                    "phi_local_minima": local_minima_count_surface(&phi),
                    "phi_argmin": [xs[pc], zs[pr]],
                    "truth_center": truth_center,
                }))?,
            )?;
        }
    }
    provenance::write(out, "landscape", provenance::config_hash(&scan), None)?;
    println!("{}", serde_json::json!({"landscape": out}));
    Ok(())
}

/// Paths inside a scan file resolve relative to the scan file itself.
fn resolve(scan_path: &Path, rel: &str) -> std::path::PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        scan_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}
