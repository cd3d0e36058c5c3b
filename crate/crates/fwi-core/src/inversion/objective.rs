//! The two least-squares objectives and their adjoint-state gradients.
//!
//! `psi` measures the data mismatch `1/2 sum_s ||f(m; h_s) - g_s||^2` in the
//! trapezoid-weighted data norm; `phi` measures the model-space mismatch
//! `1/2 ||inv(f(m)) - inv(g)||^2` over the domain, optionally plus a
//! regularizer. Both gradients are exact discrete adjoints of their values,
//! so finite-difference checks can be demanding.

use ndarray::Array2;
use rayon::prelude::*;

use super::{ForwardOperator, InverseOperator, WaveForward};
use crate::error::{FwiError, Result};
use crate::velocity::{
    eval_fourier, eval_fourier_transpose, project_fourier, FeatureKind, FeatureSpec, MeshField,
};
use crate::wave::{solve_adjoint, time_correlate, DataBundle, GridSpec};

pub type BundleWeights = Array2<f64>;

/// Trapezoid quadrature over recorded time and receiver position, shared by
/// all sources.
pub fn bundle_weights(grid: &GridSpec) -> BundleWeights {
    let nt_rec = grid.nt_rec().expect("valid grid");
    let nd = grid.receiver_count();
    let per_side = grid.nodes_per_side();
    let dt_rec = grid.record_stride as f64 * grid.dt;
    let mut w = Array2::zeros((nt_rec, nd));
    for q in 0..nt_rec {
        let wt = if q == 0 || q == nt_rec - 1 { 0.5 } else { 1.0 } * dt_rec;
        for d in 0..nd {
            let ds = d % per_side;
            let wd = if ds == 0 || ds == per_side - 1 { 0.5 } else { 1.0 } * grid.dx();
            w[[q, d]] = wt * wd;
        }
    }
    w
}

/// Trapezoid quadrature over the mesh nodes.
pub fn mesh_weights(grid: &GridSpec) -> Array2<f64> {
    let n = grid.nodes_per_side();
    let cell = grid.dx() * grid.dz();
    let mut w = Array2::from_elem((n, n), cell);
    let edge = |i: usize| i == 0 || i == n - 1;
    for l in 0..n {
        for i in 0..n {
            let mut v = cell;
            if edge(l) {
                v *= 0.5;
            }
            if edge(i) {
                v *= 0.5;
            }
            w[[l, i]] = v;
        }
    }
    w
}

fn weighted_half_norm2(bundle: &DataBundle, reference: &DataBundle, w: &BundleWeights) -> f64 {
    let mut acc = 0.0;
    for s in 0..bundle.data.dim().0 {
        let a = bundle.data.index_axis(ndarray::Axis(0), s);
        let b = reference.data.index_axis(ndarray::Axis(0), s);
        for ((q, d), &wv) in w.indexed_iter() {
            let r = a[[q, d]] - b[[q, d]];
            acc += wv * r * r;
        }
    }
    0.5 * acc
}

/// Data-mismatch objective value.
pub fn psi_value(m: &MeshField, g: &DataBundle, forward: &dyn ForwardOperator) -> Result<f64> {
    let pred = forward.apply(m)?;
    if pred.data.dim() != g.data.dim() {
        return Err(FwiError::invalid("data bundle shape mismatch"));
    }
    Ok(weighted_half_norm2(&pred, g, &forward.data_weights()))
}

/// Data-mismatch objective and its adjoint-state gradient. The gradient's
/// duplicated seam column (column K) is zeroed: it is not an independent
/// unknown.
pub fn psi_gradient(m: &MeshField, g: &DataBundle, wf: &WaveForward) -> Result<(f64, MeshField)> {
    if g.data.dim().0 != wf.sources.len() {
        return Err(FwiError::invalid("bundle source count mismatch"));
    }
    let w = bundle_weights(&wf.grid);
    let per_source: Vec<Result<(f64, MeshField)>> = wf
        .sources
        .par_iter()
        .enumerate()
        .map(|(s, src)| {
            let (rec, traj) = crate::wave::solve_forward(m, src, &wf.grid, true)?;
            let traj = traj.expect("trajectory requested");
            let gs = g.data.index_axis(ndarray::Axis(0), s);
            let mut value = 0.0;
            let mut cot = Array2::zeros(rec.traces.dim());
            for ((q, d), &wv) in w.indexed_iter() {
                let r = rec.traces[[q, d]] - gs[[q, d]];
                value += 0.5 * wv * r * r;
                cot[[q, d]] = wv * r;
            }
            let adj = solve_adjoint(m, &cot, &wf.grid)?;
            let grad = time_correlate(&traj, &adj, m)?;
            Ok((value, grad))
        })
        .collect();
    let n = m.n();
    let mut total = 0.0;
    let mut grad = MeshField::zeros(n);
    for part in per_source {
        let (v, gfield) = part?;
        total += v;
        grad.add_scaled(1.0, &gfield);
    }
    for l in 0..n {
        grad.values[[l, n - 1]] = 0.0;
    }
    Ok((total, grad))
}

/// Regularizer attached to the model-space objective.
#[derive(Debug, Clone)]
pub enum Regularizer {
    None,
    /// `gamma/2 * sum_edges ((dm/dx)^2 + (dm/dz)^2) * dx dz`, the discrete
    /// first-derivative seminorm; differentiated exactly, edge by edge.
    H1Seminorm,
    /// `gamma/2 * || decode(mu^{-1} (*) project(m)) ||^2` over the domain;
    /// cosine features only.
    WeightedFeature { feature: FeatureSpec },
}

impl Regularizer {
    /// Value and exact gradient contribution, scaled by `gamma`.
    pub fn value_and_gradient(
        &self,
        m: &MeshField,
        grid: &GridSpec,
        gamma: f64,
    ) -> Result<(f64, MeshField)> {
        let n = m.n();
        if gamma == 0.0 {
            return Ok((0.0, MeshField::zeros(n)));
        }
        match self {
            Regularizer::None => Ok((0.0, MeshField::zeros(n))),
            Regularizer::H1Seminorm => {
                let (dx, dz) = (grid.dx(), grid.dz());
                let cell = dx * dz;
                let mut value = 0.0;
                let mut grad = MeshField::zeros(n);
                // x-edges
                let cx = gamma * 0.5 * cell / (dx * dx);
                for l in 0..n {
                    for i in 0..n - 1 {
                        let d = m.values[[l, i + 1]] - m.values[[l, i]];
                        value += cx * d * d;
                        grad.values[[l, i + 1]] += 2.0 * cx * d;
                        grad.values[[l, i]] -= 2.0 * cx * d;
                    }
                }
                // z-edges
                let cz = gamma * 0.5 * cell / (dz * dz);
                for l in 0..n - 1 {
                    for i in 0..n {
                        let d = m.values[[l + 1, i]] - m.values[[l, i]];
                        value += cz * d * d;
                        grad.values[[l + 1, i]] += 2.0 * cz * d;
                        grad.values[[l, i]] -= 2.0 * cz * d;
                    }
                }
                Ok((value, grad))
            }
            Regularizer::WeightedFeature { feature } => {
                let modes = match feature.kind {
                    FeatureKind::Fourier { modes } => modes,
                    _ => {
                        return Err(FwiError::invalid(
                            "weighted-feature regularizer requires cosine features",
                        ))
                    }
                };
                if feature.mu.iter().any(|&v| v <= 0.0) {
                    return Err(FwiError::invalid(
                        "weighted-feature regularizer requires strictly positive weights",
                    ));
                }
                let w = mesh_weights(grid);
                let mut coeffs = project_fourier(m, modes, grid)?;
                for (idx, v) in coeffs.coeffs.iter_mut().enumerate() {
                    *v /= feature.mu[idx];
                }
                let field = eval_fourier(&coeffs, grid);
                let mut value = 0.0;
                let mut weighted = MeshField::zeros(m.n());
                for ((l, i), &fv) in field.values.indexed_iter() {
                    value += 0.5 * gamma * w[[l, i]] * fv * fv;
                    weighted.values[[l, i]] = gamma * w[[l, i]] * fv;
                }
                // gradient: P^T D E^T (W field), all linear maps
                let mut back = eval_fourier_transpose(&weighted, modes, grid);
                for (idx, v) in back.coeffs.iter_mut().enumerate() {
                    *v /= feature.mu[idx];
                }
                let grad = project_transpose(&back, grid);
                Ok((value, grad))
            }
        }
    }
}

/// Transpose of `project_fourier` as a linear map from coefficients to node
/// values: trapezoid weights times the cosine synthesis of the
/// norm-rescaled coefficients.
fn project_transpose(coeffs: &crate::velocity::FourierCoeffs, grid: &GridSpec) -> MeshField {
    let k = grid.cells_per_side as f64;
    let mut scaled = coeffs.clone();
    for ((kx, kz), v) in scaled.coeffs.indexed_iter_mut() {
        let nx = if kx == 0 { k } else { k / 2.0 };
        let nz = if kz == 0 { k } else { k / 2.0 };
        *v /= nx * nz;
    }
    let mut field = eval_fourier(&scaled, grid);
    let n = grid.nodes_per_side();
    for l in 0..n {
        for i in 0..n {
            let mut w = 1.0;
            if l == 0 || l == n - 1 {
                w *= 0.5;
            }
            if i == 0 || i == n - 1 {
                w *= 0.5;
            }
            field.values[[l, i]] *= w;
        }
    }
    field
}

/// Model-space objective value: `1/2 ||inv(f(m)) - inv(g)||^2 + reg`.
pub fn phi_value(
    m: &MeshField,
    g: &DataBundle,
    op: &dyn InverseOperator,
    forward: &dyn ForwardOperator,
    grid: &GridSpec,
    gamma: f64,
    reg: &Regularizer,
) -> Result<f64> {
    let pred = op.apply(&forward.apply(m)?)?;
    let anchor = op.apply(g)?;
    let w = mesh_weights(grid);
    let mut value = 0.0;
    for ((l, i), &wv) in w.indexed_iter() {
        let r = pred.values[[l, i]] - anchor.values[[l, i]];
        value += 0.5 * wv * r * r;
    }
    let (rv, _) = reg.value_and_gradient(m, grid, gamma)?;
    Ok(value + rv)
}

/// Model-space objective and gradient: forward solves per source, residual in
/// velocity space, VJP through the inverse operator to data space, adjoint
/// solves, correlation, plus the regularizer gradient.
pub fn phi_gradient(
    m: &MeshField,
    g: &DataBundle,
    op: &dyn InverseOperator,
    wf: &WaveForward,
    gamma: f64,
    reg: &Regularizer,
) -> Result<(f64, MeshField)> {
    let grid = &wf.grid;
    let (bundle, trajectories) = wf.apply_with_trajectories(m)?;
    let pred = op.apply(&bundle)?;
    let anchor = op.apply(g)?;
    let w = mesh_weights(grid);
    let n = m.n();
    let mut value = 0.0;
    let mut residual_cot = MeshField::zeros(n);
    for ((l, i), &wv) in w.indexed_iter() {
        let r = pred.values[[l, i]] - anchor.values[[l, i]];
        value += 0.5 * wv * r * r;
        residual_cot.values[[l, i]] = wv * r;
    }
    let data_cot = op.vjp(&bundle, &residual_cot)?;

    let per_source: Vec<Result<MeshField>> = trajectories
        .par_iter()
        .enumerate()
        .map(|(s, traj)| {
            let cot = data_cot.data.index_axis(ndarray::Axis(0), s).to_owned();
            let adj = solve_adjoint(m, &cot, grid)?;
            time_correlate(traj, &adj, m)
        })
        .collect();
    let mut grad = MeshField::zeros(n);
    for part in per_source {
        grad.add_scaled(1.0, &part?);
    }
    for l in 0..n {
        grad.values[[l, n - 1]] = 0.0;
    }
    let (rv, rg) = reg.value_and_gradient(m, grid, gamma)?;
    grad.add_scaled(1.0, &rg);
    Ok((value + rv, grad))
}
