//! Time-domain finite-difference solver for the acoustic wave equation on a
//! rectangle with periodic sides, reflective bottom, and a Neumann-forced top
//! boundary, plus the exact discrete adjoint of the record map and the
//! wavefield correlation kernel used by adjoint-state gradients.
//!
//! The scheme is second-order centered in time with the standard 5-point
//! Laplacian on the nodal grid. Neumann boundaries are realized through ghost
//! nodes (`ghost = interior - 2*dz*h`), periodic sides through index wrap over
//! the K fundamental columns; column K of every stored field duplicates
//! column 0.
//!
//! The adjoint here is the transpose of the discrete forward map, not a
//! discretization of the continuous adjoint system: `solve_adjoint` composed
//! with [`time_correlate`] reproduces `(d record / d m)^T` to rounding error,
//! which is what the gradient tests demand.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::velocity::MeshField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverSide {
    Bottom,
    Top,
    Both,
}

/// Domain geometry, mesh resolution, time step, and recording schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Domain width L; the domain is (0, L) x (-H, 0).
    pub length_x: f64,
    /// Domain depth H.
    pub depth_z: f64,
    /// Cells per side K; the mesh has (K+1) x (K+1) nodes.
    pub cells_per_side: usize,
    /// Time step.
    pub dt: f64,
    /// Final time T; T / dt must be an integer (within 1e-9 relative).
    pub t_final: f64,
    /// First recorded time t0.
    pub record_start: f64,
    /// Record every `record_stride` time steps.
    pub record_stride: usize,
    pub receiver_side: ReceiverSide,
}

impl GridSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        length_x: f64,
        depth_z: f64,
        cells_per_side: usize,
        dt: f64,
        t_final: f64,
        record_start: f64,
        record_stride: usize,
        receiver_side: ReceiverSide,
    ) -> Self {
        GridSpec {
            length_x,
            depth_z,
            cells_per_side,
            dt,
            t_final,
            record_start,
            record_stride,
            receiver_side,
        }
    }

    /// The discretization of Table-1 style experiments: unit square domain,
    /// K = 50, dt = 5e-4, T = 0.5, recording every 20 steps from t = 0.
    pub fn table1(receiver_side: ReceiverSide) -> Self {
        GridSpec::new(1.0, 1.0, 50, 5e-4, 0.5, 0.0, 20, receiver_side)
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells_per_side + 1
    }

    pub fn dx(&self) -> f64 {
        self.length_x / self.cells_per_side as f64
    }

    pub fn dz(&self) -> f64 {
        self.depth_z / self.cells_per_side as f64
    }

    pub fn x_at(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Depth coordinate of row `l`; row 0 is the top surface z = 0.
    pub fn z_at(&self, l: usize) -> f64 {
        -(l as f64) * self.dz()
    }

    fn checked_integer(&self, value: f64, what: &str) -> Result<usize> {
        let rounded = value.round();
        if (value - rounded).abs() > 1e-9 * rounded.abs().max(1.0) || rounded < 0.0 {
            return Err(FwiError::invalid(format!(
                "{what} = {value} is not a nonnegative integer multiple of dt"
            )));
        }
        Ok(rounded as usize)
    }

    /// Number of time steps Nt = T / dt.
    pub fn nt(&self) -> Result<usize> {
        self.checked_integer(self.t_final / self.dt, "t_final / dt")
    }

    /// Time-step indices at which the field is recorded.
    pub fn record_steps(&self) -> Result<Vec<usize>> {
        let nt = self.nt()?;
        let n0 = self.checked_integer(self.record_start / self.dt, "record_start / dt")?;
        if n0 > nt {
            return Err(FwiError::invalid("record_start is past t_final"));
        }
        Ok((n0..=nt).step_by(self.record_stride).collect())
    }

    /// Number of recorded samples per trace.
    pub fn nt_rec(&self) -> Result<usize> {
        Ok(self.record_steps()?.len())
    }

    /// Number of receivers: K+1 per recorded side.
    pub fn receiver_count(&self) -> usize {
        let per_side = self.nodes_per_side();
        match self.receiver_side {
            ReceiverSide::Both => 2 * per_side,
            _ => per_side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_per_side < 2 {
            return Err(FwiError::invalid("cells_per_side must be at least 2"));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(FwiError::invalid("dt and t_final must be positive"));
        }
        if !(self.length_x > 0.0) || !(self.depth_z > 0.0) {
            return Err(FwiError::invalid("domain extents must be positive"));
        }
        if self.record_stride == 0 {
            return Err(FwiError::invalid("record_stride must be at least 1"));
        }
        self.record_steps()?;
        Ok(())
    }

    /// Row/column of the mesh node behind receiver index `d`.
    pub fn receiver_node(&self, d: usize) -> (usize, usize) {
        let n = self.nodes_per_side();
        let k = self.cells_per_side;
        let (side_is_top, col) = match self.receiver_side {
            ReceiverSide::Bottom => (false, d),
            ReceiverSide::Top => (true, d),
            ReceiverSide::Both => (d >= n, d % n),
        };
        let row = if side_is_top { 0 } else { k };
        (row, col)
    }
}

/// Temporal factor of a separable source h(t, x) = a(t) b(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Temporal {
    Constant { value: f64 },
    /// One sample per time level, `nt + 1` entries.
    Samples { values: Vec<f64> },
}

impl Temporal {
    fn at(&self, step: usize) -> f64 {
        match self {
            Temporal::Constant { value } => *value,
            Temporal::Samples { values } => values[step],
        }
    }
}

/// Neumann source on the top boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProfile {
    /// b(x) sampled on the K+1 top-boundary nodes.
    pub spatial: Vec<f64>,
    pub temporal: Temporal,
}

impl SourceProfile {
    pub fn constant_in_time(spatial: Vec<f64>) -> Self {
        SourceProfile {
            spatial,
            temporal: Temporal::Constant { value: 1.0 },
        }
    }

    /// The difference-of-Gaussians profile `exp(-(x-a)^2/0.01) - exp(-(x-b)^2/0.01)`.
    pub fn gaussian_pair(grid: &GridSpec, a: f64, b: f64) -> Self {
        let n = grid.nodes_per_side();
        let spatial = (0..n)
            .map(|i| {
                let x = grid.x_at(i);
                (-(x - a).powi(2) / 0.01).exp() - (-(x - b).powi(2) / 0.01).exp()
            })
            .collect();
        SourceProfile::constant_in_time(spatial)
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.spatial.len() != grid.nodes_per_side() {
            return Err(FwiError::invalid(format!(
                "source has {} spatial samples, grid has {} top nodes",
                self.spatial.len(),
                grid.nodes_per_side()
            )));
        }
        if let Temporal::Samples { values } = &self.temporal {
            let nt = grid.nt()?;
            if values.len() != nt + 1 {
                return Err(FwiError::invalid(format!(
                    "temporal profile has {} samples, expected nt + 1 = {}",
                    values.len(),
                    nt + 1
                )));
            }
        }
        Ok(())
    }
}

/// The standard battery of top sources used across the experiments; the
/// first three illuminate training data, the remaining four only appear in
/// the extended hybrid configuration.
pub fn standard_sources(grid: &GridSpec, count: usize) -> Vec<SourceProfile> {
    const CENTERS: [(f64, f64); 7] = [
        (0.8, 0.2),
        (0.4, 0.7),
        (0.6, 0.3),
        (0.7, 0.2),
        (0.3, 0.9),
        (0.2, 0.5),
        (0.1, 0.6),
    ];
    CENTERS
        .iter()
        .take(count)
        .map(|&(a, b)| SourceProfile::gaussian_pair(grid, a, b))
        .collect()
}

/// Receiver traces of one shot: `(nt_rec, n_receivers)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub traces: Array2<f64>,
    pub grid: GridSpec,
    pub source_id: usize,
}

/// Traces of all shots: `(n_sources, nt_rec, n_receivers)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    pub data: Array3<f64>,
}

impl DataBundle {
    pub fn from_records(records: Vec<ShotRecord>) -> Self {
        let ns = records.len();
        let (nt, nd) = records[0].traces.dim();
        let mut data = Array3::zeros((ns, nt, nd));
        for (s, r) in records.iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), s).assign(&r.traces);
        }
        DataBundle { data }
    }

    pub fn n_sources(&self) -> usize {
        self.data.dim().0
    }

    /// Flat row-major view (source, time, receiver), the network input layout.
    pub fn flat(&self) -> &[f64] {
        self.data.as_slice().expect("bundle is contiguous")
    }

    pub fn from_flat(ns: usize, nt: usize, nd: usize, flat: Vec<f64>) -> Result<Self> {
        let data = Array3::from_shape_vec((ns, nt, nd), flat)
            .map_err(|_| FwiError::invalid("flat signal length does not match shape"))?;
        Ok(DataBundle { data })
    }
}

/// Full time history of a wavefield: `(nt + 1, K+1, K+1)` snapshots.
#[derive(Debug, Clone)]
pub struct WavefieldTrajectory {
    pub snapshots: Array3<f64>,
    pub dt: f64,
}

/// Largest stable time step: `min(dx, dz) / (sqrt(2) * m_max)`.
pub fn cfl_max_dt(grid: &GridSpec, m_max: f64) -> Result<f64> {
    if !(m_max > 0.0) {
        return Err(FwiError::invalid("velocity bound must be positive"));
    }
    Ok(grid.dx().min(grid.dz()) / (std::f64::consts::SQRT_2 * m_max))
}

fn check_velocity(m: &MeshField, grid: &GridSpec) -> Result<()> {
    if m.n() != grid.nodes_per_side() {
        return Err(FwiError::invalid("velocity field does not match grid"));
    }
    if !m.is_finite() || m.min() <= 0.0 {
        return Err(FwiError::invalid("velocity must be finite and strictly positive"));
    }
    let admissible = cfl_max_dt(grid, m.max())?;
    if grid.dt > admissible {
        return Err(FwiError::CflViolation {
            dt: grid.dt,
            admissible,
        });
    }
    Ok(())
}

/// One centered step of the interior scheme. Writes
/// `next = 2 cur - prev + dt^2 m^2 (Lap cur)` over the fundamental columns
/// and duplicates column 0 into column K. `transpose` selects the transposed
/// z-closure used by the adjoint sweep. Returns max |next|.
#[allow(clippy::too_many_arguments)]
fn centered_step(
    next: &mut Array2<f64>,
    cur: &Array2<f64>,
    prev: &Array2<f64>,
    m2dt2: &Array2<f64>,
    inv_dx2: f64,
    inv_dz2: f64,
    k: usize,
    transpose: bool,
) -> f64 {
    let mut max_abs = 0.0f64;
    for l in 0..=k {
        // z-direction coupling coefficients at this row
        let (c_prev, c_next) = if transpose {
            (
                if l == 1 { 2.0 } else { 1.0 },
                if l + 1 == k { 2.0 } else { 1.0 },
            )
        } else {
            (
                if l == k { 2.0 } else { 1.0 },
                if l == 0 { 2.0 } else { 1.0 },
            )
        };
        for i in 0..k {
            let il = if i == 0 { k - 1 } else { i - 1 };
            let ir = if i + 1 == k { 0 } else { i + 1 };
            let c = cur[[l, i]];
            let mut lap = (cur[[l, il]] + cur[[l, ir]] - 2.0 * c) * inv_dx2;
            let mut zpart = -2.0 * c;
            if l > 0 {
                zpart += c_prev * cur[[l - 1, i]];
            }
            if l < k {
                zpart += c_next * cur[[l + 1, i]];
            }
            lap += zpart * inv_dz2;
            let v = 2.0 * c - prev[[l, i]] + m2dt2[[l, i]] * lap;
            next[[l, i]] = v;
            max_abs = max_abs.max(v.abs());
        }
        next[[l, k]] = next[[l, 0]];
    }
    max_abs
}

/// Run the forward solver; returns the shot record and, when requested, the
/// full wavefield trajectory (snapshot 0 is the zero initial state).
pub fn solve_forward(
    m: &MeshField,
    src: &SourceProfile,
    grid: &GridSpec,
    keep_trajectory: bool,
) -> Result<(ShotRecord, Option<WavefieldTrajectory>)> {
    grid.validate()?;
    check_velocity(m, grid)?;
    src.validate(grid)?;

    let k = grid.cells_per_side;
    let n = k + 1;
    let nt = grid.nt()?;
    let record_steps = grid.record_steps()?;
    let nd = grid.receiver_count();
    let dt = grid.dt;
    let (inv_dx2, inv_dz2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dz() * grid.dz()));
    let m2dt2 = m.values.mapv(|v| v * v * dt * dt);
    // Neumann ghost closure: ghost = interior - 2 dz h, contributing
    // -2 h / dz to the Laplacian on the top row.
    let force_scale = -2.0 / grid.dz();

    let mut prev = Array2::<f64>::zeros((n, n));
    let mut cur = Array2::<f64>::zeros((n, n));
    let mut next = Array2::<f64>::zeros((n, n));
    let mut traj = keep_trajectory.then(|| Array3::<f64>::zeros((nt + 1, n, n)));
    let mut traces = Array2::<f64>::zeros((record_steps.len(), nd));
    let mut rec_index = 0usize;
    if record_steps[0] == 0 {
        rec_index = 1; // step-0 sample of the zero initial state
    }

    for step in 0..nt {
        let max_abs = centered_step(
            &mut next, &cur, &prev, &m2dt2, inv_dx2, inv_dz2, k, false,
        );
        // top-boundary forcing at time level `step`
        let a = src.temporal.at(step);
        if a != 0.0 {
            for i in 0..k {
                next[[0, i]] += m2dt2[[0, i]] * force_scale * a * src.spatial[i];
            }
            next[[0, k]] = next[[0, 0]];
        }
        if step == 0 {
            // first step carries the 1/2 Taylor factor (u(-dt) = u(dt))
            for v in next.iter_mut() {
                *v *= 0.5;
            }
        }
        if !max_abs.is_finite() {
            return Err(FwiError::Instability { step: step + 1 });
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        if let Some(t) = traj.as_mut() {
            t.index_axis_mut(ndarray::Axis(0), step + 1).assign(&cur);
        }
        if rec_index < record_steps.len() && record_steps[rec_index] == step + 1 {
            for d in 0..nd {
                let (row, col) = grid.receiver_node(d);
                traces[[rec_index, d]] = cur[[row, col]];
            }
            rec_index += 1;
        }
    }

    let record = ShotRecord {
        traces,
        grid: grid.clone(),
        source_id: 0,
    };
    let trajectory = traj.map(|snapshots| WavefieldTrajectory { snapshots, dt });
    Ok((record, trajectory))
}

/// Solve the time-reversed adjoint sweep for a receiver-space cotangent of
/// shape `(nt_rec, n_receivers)`.
///
/// The returned trajectory `w`, correlated with the forward trajectory via
/// [`time_correlate`], is the exact transpose of the linearized
/// record-from-velocity map.
pub fn solve_adjoint(
    m: &MeshField,
    adjoint_boundary_source: &Array2<f64>,
    grid: &GridSpec,
) -> Result<WavefieldTrajectory> {
    grid.validate()?;
    check_velocity(m, grid)?;
    let k = grid.cells_per_side;
    let n = k + 1;
    let nt = grid.nt()?;
    let record_steps = grid.record_steps()?;
    let nd = grid.receiver_count();
    if adjoint_boundary_source.dim() != (record_steps.len(), nd) {
        return Err(FwiError::invalid(format!(
            "cotangent shape {:?} does not match (nt_rec, receivers) = ({}, {})",
            adjoint_boundary_source.dim(),
            record_steps.len(),
            nd
        )));
    }
    let dt = grid.dt;
    let (inv_dx2, inv_dz2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dz() * grid.dz()));
    let m2dt2 = m.values.mapv(|v| v * v * dt * dt);
    // cotangent injection scale; together with the 1/dt in time_correlate
    // this makes the pipeline the exact transpose of the linearized record
    let m2_dt = m.values.mapv(|v| v * v * dt);

    // map step index -> recorded sample index
    let mut rec_at_step = vec![usize::MAX; nt + 1];
    for (q, &s) in record_steps.iter().enumerate() {
        rec_at_step[s] = q;
    }

    let mut snapshots = Array3::<f64>::zeros((nt + 1, n, n));
    let mut w_next = Array2::<f64>::zeros((n, n)); // w^{k+1}
    let mut w_cur = Array2::<f64>::zeros((n, n)); // w^{k}, starts at level nt
    let mut w_prev = Array2::<f64>::zeros((n, n));

    for level in (1..=nt).rev() {
        let max_abs = centered_step(
            &mut w_prev, &w_cur, &w_next, &m2dt2, inv_dx2, inv_dz2, k, true,
        );
        if !max_abs.is_finite() {
            return Err(FwiError::Instability { step: level });
        }
        let q = rec_at_step[level];
        if q != usize::MAX {
            for d in 0..nd {
                let (row, col) = grid.receiver_node(d);
                let col = if col == k { 0 } else { col };
                w_prev[[row, col]] += m2_dt[[row, col]] * adjoint_boundary_source[[q, d]];
            }
            for l in 0..n {
                w_prev[[l, k]] = w_prev[[l, 0]];
            }
        }
        snapshots
            .index_axis_mut(ndarray::Axis(0), level - 1)
            .assign(&w_prev);
        std::mem::swap(&mut w_next, &mut w_cur);
        std::mem::swap(&mut w_cur, &mut w_prev);
    }

    Ok(WavefieldTrajectory { snapshots, dt })
}

/// Correlate forward and adjoint trajectories into a velocity-space field:
/// `-(2 / m^3) * sum_t (dw/dt)(du/dt) dt` with forward-difference time
/// derivatives on the leapfrog levels.
pub fn time_correlate(
    u: &WavefieldTrajectory,
    w: &WavefieldTrajectory,
    m: &MeshField,
) -> Result<MeshField> {
    if u.snapshots.dim() != w.snapshots.dim() {
        return Err(FwiError::invalid("trajectories have different shapes"));
    }
    let (nt1, n, _) = u.snapshots.dim();
    if m.n() != n {
        return Err(FwiError::invalid("velocity field does not match trajectories"));
    }
    let dt = u.dt;
    let mut acc = Array2::<f64>::zeros((n, n));
    for t in 0..nt1 - 1 {
        let u0 = u.snapshots.index_axis(ndarray::Axis(0), t);
        let u1 = u.snapshots.index_axis(ndarray::Axis(0), t + 1);
        let w0 = w.snapshots.index_axis(ndarray::Axis(0), t);
        let w1 = w.snapshots.index_axis(ndarray::Axis(0), t + 1);
        ndarray::Zip::from(&mut acc)
            .and(&u0)
            .and(&u1)
            .and(&w0)
            .and(&w1)
            .for_each(|a, &ua, &ub, &wa, &wb| {
                *a += (wb - wa) * (ub - ua);
            });
    }
    let mut out = Array2::<f64>::zeros((n, n));
    ndarray::Zip::from(&mut out)
        .and(&acc)
        .and(&m.values)
        .for_each(|o, &a, &mv| {
            *o = -2.0 / (mv * mv * mv) * a / dt;
        });
    Ok(MeshField { values: out })
}
