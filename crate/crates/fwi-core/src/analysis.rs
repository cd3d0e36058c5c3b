//! Diagnostics over trained operators and reconstructions: spectral
//! prediction errors, field error norms, 1D objective scans along cosine
//! modes, 2D scans over Gaussian bump locations, local-minimum counting, and
//! CSV/JSON report emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::inversion::{
    phi_value, psi_value, ForwardOperator, InverseOperator, Regularizer, WaveForward,
};
use crate::velocity::{
    eval_gaussian, project_fourier, FourierCoeffs, GaussianComponent, GaussianMixture, MeshField,
};
use crate::wave::{DataBundle, GridSpec};

/// Coefficient-space error `project(m_true - m_pred)`.
pub fn spectral_error(
    m_true: &MeshField,
    m_pred: &MeshField,
    modes: usize,
    grid: &GridSpec,
) -> Result<FourierCoeffs> {
    if m_true.n() != m_pred.n() {
        return Err(FwiError::invalid("fields live on different grids"));
    }
    project_fourier(&m_true.sub(m_pred), modes, grid)
}

/// Trapezoid-quadrature L2 and pointwise max of the difference.
pub fn error_norms(m_true: &MeshField, m_pred: &MeshField, grid: &GridSpec) -> (f64, f64) {
    let w = crate::inversion::mesh_weights(grid);
    let mut l2 = 0.0;
    let mut linf = 0.0f64;
    for ((l, i), &wv) in w.indexed_iter() {
        let d = m_true.values[[l, i]] - m_pred.values[[l, i]];
        l2 += wv * d * d;
        linf = linf.max(d.abs());
    }
    (l2.sqrt(), linf)
}

/// Mean absolute coefficient error split into a low band
/// (`max(kx,kz) <= low_max`) and a high band (`max(kx,kz) >= high_min`).
pub fn band_mean_abs(coeffs: &FourierCoeffs, low_max: usize, high_min: usize) -> (f64, f64) {
    let (mut low_sum, mut low_n, mut high_sum, mut high_n) = (0.0, 0usize, 0.0, 0usize);
    for ((kx, kz), v) in coeffs.coeffs.indexed_iter() {
        let band = kx.max(kz);
        if band <= low_max {
            low_sum += v.abs();
            low_n += 1;
        }
        if band >= high_min {
            high_sum += v.abs();
            high_n += 1;
        }
    }
    (
        if low_n > 0 { low_sum / low_n as f64 } else { 0.0 },
        if high_n > 0 { high_sum / high_n as f64 } else { 0.0 },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseRule {
    /// Scan through the true model.
    Identity,
    /// Scan through the operator's round trip of the true model.
    NetworkRoundtrip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Psi,
    Phi,
}

/// A 1D scan along one cosine mode direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanSpec {
    pub mode: [usize; 2],
    pub range: [f64; 2],
    pub samples: usize,
    pub base: BaseRule,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 3 {
            return Err(FwiError::invalid("a scan needs at least 3 samples"));
        }
        if !(self.range[0] < self.range[1]) {
            return Err(FwiError::invalid("scan range must be increasing"));
        }
        Ok(())
    }
}

/// Evaluate an objective along `m0 + h * phi_k` for h over the scan range.
#[allow(clippy::too_many_arguments)]
pub fn line_scan(
    kind: ObjectiveKind,
    g: &DataBundle,
    m_true: &MeshField,
    spec: &ScanSpec,
    op: &dyn InverseOperator,
    wf: &WaveForward,
    clamp: Option<[f64; 2]>,
) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    let grid = &wf.grid;
    let m0 = match spec.base {
        BaseRule::Identity => m_true.clone(),
        BaseRule::NetworkRoundtrip => op.apply(&wf.apply(m_true)?)?,
    };
    let modes = spec.mode[0].max(spec.mode[1]) + 1;
    let mut unit = FourierCoeffs::zeros(modes);
    unit.coeffs[[spec.mode[0], spec.mode[1]]] = 1.0;
    let direction = crate::velocity::eval_fourier(&unit, grid);

    let hs: Vec<f64> = (0..spec.samples)
        .map(|i| {
            spec.range[0]
                + (spec.range[1] - spec.range[0]) * i as f64 / (spec.samples - 1) as f64
        })
        .collect();
    let values: Vec<Result<f64>> = hs
        .par_iter()
        .map(|&h| {
            let mut m = m0.clone();
            m.add_scaled(h, &direction);
            if let Some([lo, hi]) = clamp {
                m.clamp_range(lo, hi);
            }
            match kind {
                ObjectiveKind::Psi => psi_value(&m, g, wf),
                ObjectiveKind::Phi => {
                    phi_value(&m, g, op, wf, grid, 0.0, &Regularizer::None)
                }
            }
        })
        .collect();
    let mut out = Vec::with_capacity(hs.len());
    for (h, v) in hs.into_iter().zip(values) {
        out.push((h, v?));
    }
    Ok(out)
}

/// Fixed-shape single-bump template scanned over candidate centers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BumpTemplate {
    pub background: f64,
    pub amplitude: f64,
    pub sigma: f64,
}

impl BumpTemplate {
    pub fn field(&self, x0: f64, z0: f64, grid: &GridSpec) -> Result<MeshField> {
        eval_gaussian(
            &GaussianMixture {
                background: self.background,
                components: vec![GaussianComponent::isotropic(
                    self.amplitude,
                    x0,
                    z0,
                    self.sigma * self.sigma,
                )],
            },
            grid,
        )
    }
}

/// Evaluate both objectives over a grid of bump centers; returns
/// (psi surface, phi surface) with rows indexed by z and columns by x.
pub fn location_scan(
    g: &DataBundle,
    template: &BumpTemplate,
    xs: &[f64],
    zs: &[f64],
    op: &dyn InverseOperator,
    wf: &WaveForward,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let grid = &wf.grid;
    let points: Vec<(usize, usize)> = (0..zs.len())
        .flat_map(|r| (0..xs.len()).map(move |c| (r, c)))
        .collect();
    let values: Vec<Result<(f64, f64)>> = points
        .par_iter()
        .map(|&(r, c)| {
            let m = template.field(xs[c], zs[r], grid)?;
            let psi = psi_value(&m, g, wf)?;
            let phi = phi_value(&m, g, op, wf, grid, 0.0, &Regularizer::None)?;
            Ok((psi, phi))
        })
        .collect();
    let mut psi = Array2::zeros((zs.len(), xs.len()));
    let mut phi = Array2::zeros((zs.len(), xs.len()));
    for (&(r, c), v) in points.iter().zip(values) {
        let (pv, fv) = v?;
        psi[[r, c]] = pv;
        phi[[r, c]] = fv;
    }
    Ok((psi, phi))
}

/// Count interior samples strictly below both neighbors.
pub fn local_minima_count_line(values: &[f64]) -> usize {
    values
        .windows(3)
        .filter(|w| w[1] < w[0] && w[1] < w[2])
        .count()
}

/// Count interior grid points strictly below all 4-neighbors.
pub fn local_minima_count_surface(surface: &Array2<f64>) -> usize {
    let (rows, cols) = surface.dim();
    let mut count = 0;
    for r in 1..rows - 1 {
        for c in 1..cols - 1 {
            let v = surface[[r, c]];
            if v < surface[[r - 1, c]]
                && v < surface[[r + 1, c]]
                && v < surface[[r, c - 1]]
                && v < surface[[r, c + 1]]
            {
                count += 1;
            }
        }
    }
    count
}

/// Location of the smallest sample in a surface.
pub fn argmin_surface(surface: &Array2<f64>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_v = f64::INFINITY;
    for ((r, c), &v) in surface.indexed_iter() {
        if v < best_v {
            best_v = v;
            best = (r, c);
        }
    }
    best
}

/// Empirical operator-stability ratio
/// `||inv(f(a)) - inv(f(b))|| / ||a - b||` in the domain L2 norm.
pub fn stability_ratio(
    op: &dyn InverseOperator,
    wf: &WaveForward,
    a: &MeshField,
    b: &MeshField,
) -> Result<f64> {
    let pa = op.apply(&wf.apply(a)?)?;
    let pb = op.apply(&wf.apply(b)?)?;
    let (num, _) = error_norms(&pa, &pb, &wf.grid);
    let (den, _) = error_norms(a, b, &wf.grid);
    Ok(num / den.max(1e-300))
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeumannRow {
    pub j: usize,
    pub l2_error: f64,
    pub linf_error: f64,
    pub cpu_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub h: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub x: f64,
    pub z: f64,
    pub psi: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// A report is a named table; the CSV schema is the field order below.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Neumann { rows: Vec<NeumannRow> },
    Scan { rows: Vec<ScanRow> },
    Surface { rows: Vec<SurfaceRow> },
    Losses { rows: Vec<LossRow> },
}

impl Report {
    fn csv(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Neumann { rows } => {
                out.push_str("j,l2_error,linf_error,cpu_seconds\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        r.j, r.l2_error, r.linf_error, r.cpu_seconds
                    );
                }
            }
            Report::Scan { rows } => {
                out.push_str("h,value\n");
                for r in rows {
                    let _ = writeln!(out, "{},{}", r.h, r.value);
                }
            }
            Report::Surface { rows } => {
                out.push_str("x,z,psi,phi\n");
                for r in rows {
                    let _ = writeln!(out, "{},{},{},{}", r.x, r.z, r.psi, r.phi);
                }
            }
            Report::Losses { rows } => {
                out.push_str("epoch,learning_rate,train_loss,val_loss\n");
                for r in rows {
                    let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        r.epoch, r.learning_rate, r.train_loss, val
                    );
                }
            }
        }
        out
    }
}

/// Write a report table to `path` in the chosen format.
pub fn emit_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    match format {
        ReportFormat::Csv => fs::write(path, report.csv())?,
        ReportFormat::Json => fs::write(path, serde_json::to_string_pretty(report)?)?,
    }
    Ok(())
}
