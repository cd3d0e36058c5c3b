//! Truncated Neumann-series reconstruction and its coefficient-space
//! validation harness.
//!
//! Writing the preconditioned system as `m - K(m) = m0` with
//! `K = I - inv o f`, the J-term truncated series is evaluated through the
//! recursion `m <- m0 + m - inv(f(m))`, which adds one series term per pass.

use std::time::Instant;

use super::{ForwardOperator, InverseOperator};
use crate::error::Result;
use crate::velocity::{eval_fourier, project_fourier, FourierCoeffs, MeshField};
use crate::wave::{DataBundle, GridSpec};

/// Tighten a clamp range so clamped fields stay CFL-admissible at the
/// grid's time step (with a small safety margin below the exact ceiling).
pub fn cfl_safe_clamp(grid: &GridSpec, lo: f64, hi: f64) -> [f64; 2] {
    let ceiling = grid.dx().min(grid.dz()) / (std::f64::consts::SQRT_2 * grid.dt);
    [lo.min(0.999 * ceiling), hi.min(0.999 * ceiling)]
}

#[derive(Debug, Clone)]
pub struct NeumannOpts {
    /// Series terms J >= 1; J = 1 returns the operator output itself.
    pub terms: usize,
    /// Clamp iterates into this range before each forward solve, protecting
    /// the CFL bound; events are counted in the result.
    pub clamp: Option<[f64; 2]>,
    pub keep_iterates: bool,
}

impl NeumannOpts {
    pub fn new(terms: usize) -> Self {
        NeumannOpts {
            terms,
            clamp: None,
            keep_iterates: false,
        }
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some([lo, hi]);
        self
    }

    pub fn keeping_iterates(mut self) -> Self {
        self.keep_iterates = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct NeumannResult {
    pub field: MeshField,
    /// Iterates after 1..=J terms, kept on request.
    pub iterates: Vec<MeshField>,
    /// Cumulative wall-clock seconds after each term (term 1 costs nothing
    /// beyond the operator evaluation).
    pub seconds_per_term: Vec<f64>,
    pub clamp_events: usize,
}

/// Run the J-term reconstruction `m0 + sum_{j<J} K^j` via the one-term-per-
/// pass recursion.
pub fn neumann_reconstruct(
    op: &dyn InverseOperator,
    g: &DataBundle,
    forward: &dyn ForwardOperator,
    opts: &NeumannOpts,
) -> Result<NeumannResult> {
    assert!(opts.terms >= 1, "at least one series term is required");
    let start = Instant::now();
    let m0 = op.apply(g)?;
    let mut m = m0.clone();
    let mut iterates = Vec::new();
    let mut seconds = Vec::with_capacity(opts.terms);
    let mut clamp_events = 0usize;
    if opts.keep_iterates {
        iterates.push(m.clone());
    }
    seconds.push(start.elapsed().as_secs_f64());
    for _ in 1..opts.terms {
        let mut probe = m.clone();
        if let Some([lo, hi]) = opts.clamp {
            clamp_events += probe.clamp_range(lo, hi);
        }
        let predicted = op.apply(&forward.apply(&probe)?)?;
        // m <- m0 + m - inv(f(m))
        let mut next = m0.clone();
        next.add_scaled(1.0, &m);
        next.add_scaled(-1.0, &predicted);
        m = next;
        if opts.keep_iterates {
            iterates.push(m.clone());
        }
        seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(NeumannResult {
        field: m,
        iterates,
        seconds_per_term: seconds,
        clamp_events,
    })
}

/// The same recursion on plain vectors, for operators given as closures;
/// returns the iterate after each term count 1..=J.
pub fn abstract_neumann(
    forward: &dyn Fn(&[f64]) -> Vec<f64>,
    approx_inverse: &dyn Fn(&[f64]) -> Vec<f64>,
    m0: &[f64],
    terms: usize,
) -> Vec<Vec<f64>> {
    assert!(terms >= 1);
    let mut history = Vec::with_capacity(terms);
    let mut m = m0.to_vec();
    history.push(m.clone());
    for _ in 1..terms {
        let s = approx_inverse(&forward(&m));
        for i in 0..m.len() {
            m[i] = m0[i] + m[i] - s[i];
        }
        history.push(m.clone());
    }
    history
}

/// Wrap a reference inverse so its outputs are spectrally truncated to modes
/// with `max(kx, kz) <= k0`.
pub struct BandLimitedInverse {
    pub inner: Box<dyn InverseOperator + Send>,
    pub k0: usize,
    pub modes: usize,
    pub grid: GridSpec,
}

pub fn make_band_limited_mock(
    inner: Box<dyn InverseOperator + Send>,
    k0: usize,
    modes: usize,
    grid: GridSpec,
) -> BandLimitedInverse {
    BandLimitedInverse {
        inner,
        k0,
        modes,
        grid,
    }
}

impl InverseOperator for BandLimitedInverse {
    fn apply(&self, g: &DataBundle) -> Result<MeshField> {
        let full = self.inner.apply(g)?;
        let mut coeffs = project_fourier(&full, self.modes, &self.grid)?;
        for ((kx, kz), v) in coeffs.coeffs.indexed_iter_mut() {
            if kx.max(kz) > self.k0 {
                *v = 0.0;
            }
        }
        Ok(eval_fourier(&coeffs, &self.grid))
    }
}

/// Largest coefficient magnitude outside the `max(kx, kz) <= k0` band.
pub fn out_of_band_max(coeffs: &FourierCoeffs, k0: usize) -> f64 {
    let mut worst = 0.0f64;
    for ((kx, kz), v) in coeffs.coeffs.indexed_iter() {
        if kx.max(kz) > k0 {
            worst = worst.max(v.abs());
        }
    }
    worst
}
