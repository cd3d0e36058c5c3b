//! Warm-started reconstruction for targets outside the training family:
//! a truncated Neumann series on the training-geometry data provides the
//! low-frequency initial guess, then BFGS on the data-mismatch objective
//! with an extended source/receiver battery recovers the rest.

use ndarray::Array2;

use super::{
    bfgs_minimize, neumann_reconstruct, psi_gradient, BfgsOpts, BfgsResult, InverseOperator,
    NeumannOpts, WaveForward,
};
use crate::error::Result;
use crate::velocity::MeshField;
use crate::wave::DataBundle;

#[derive(Debug, Clone)]
pub struct HybridResult {
    pub warm_start: MeshField,
    pub refined: MeshField,
    pub psi_warm: f64,
    pub psi_final: f64,
    pub bfgs_iterations: usize,
    pub bfgs_trace: Vec<f64>,
    pub neumann_seconds: f64,
    pub bfgs_seconds: f64,
}

/// Neumann warm start on the training-view data, then BFGS on the
/// data-mismatch objective over the extended configuration.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_reconstruct(
    op: &dyn InverseOperator,
    g_warm: &DataBundle,
    fwd_warm: &WaveForward,
    g_full: &DataBundle,
    fwd_full: &WaveForward,
    neumann: &NeumannOpts,
    bfgs: &BfgsOpts,
) -> Result<HybridResult> {
    let t0 = std::time::Instant::now();
    let warm = neumann_reconstruct(op, g_warm, fwd_warm, neumann)?;
    let neumann_seconds = t0.elapsed().as_secs_f64();
    let n = warm.field.n();

    let clamp = neumann.clamp;
    let t1 = std::time::Instant::now();
    let mut objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut field = MeshField {
            values: Array2::from_shape_vec((n, n), x.to_vec()).unwrap(),
        };
        if let Some([lo, hi]) = clamp {
            field.clamp_range(lo, hi);
        }
        let (value, grad) = psi_gradient(&field, g_full, fwd_full)?;
        Ok((value, grad.values.iter().copied().collect()))
    };
    let x0: Vec<f64> = warm.field.values.iter().copied().collect();
    let result: BfgsResult = bfgs_minimize(&mut objective, &x0, bfgs)?;
    let bfgs_seconds = t1.elapsed().as_secs_f64();

    let mut refined = MeshField {
        values: Array2::from_shape_vec((n, n), result.x).unwrap(),
    };
    if let Some([lo, hi]) = clamp {
        refined.clamp_range(lo, hi);
    }
    Ok(HybridResult {
        warm_start: warm.field,
        refined,
        psi_warm: *result.trace.first().expect("trace has the start value"),
        psi_final: result.value,
        bfgs_iterations: result.iterations,
        bfgs_trace: result.trace,
        neumann_seconds,
        bfgs_seconds,
    })
}
