//! Online reconstruction: the approximate-inverse operator abstraction,
//! truncated Neumann-series iteration, the data-space and model-space
//! least-squares objectives with adjoint-state gradients, BFGS minimization,
//! and the hybrid warm-start pipeline.

mod bfgs;
mod hybrid;
mod neumann;
mod objective;

pub use bfgs::{bfgs_minimize, BfgsOpts, BfgsResult, BfgsStatus};
pub use hybrid::{hybrid_reconstruct, HybridResult};
pub use neumann::{
    abstract_neumann, cfl_safe_clamp, make_band_limited_mock, neumann_reconstruct,
    out_of_band_max, BandLimitedInverse, NeumannOpts, NeumannResult,
};
pub use objective::{
    bundle_weights, mesh_weights, phi_gradient, phi_value, psi_gradient, psi_value, BundleWeights,
    Regularizer,
};

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::error::{FwiError, Result};
use crate::nn::{self, NetworkParams, NetworkSpec};
use crate::velocity::MeshField;
use crate::wave::{solve_forward, DataBundle, GridSpec, SourceProfile, WavefieldTrajectory};

/// A map from velocity fields to data bundles.
pub trait ForwardOperator: Sync {
    fn apply(&self, m: &MeshField) -> Result<DataBundle>;
    /// Quadrature weights of the data-space inner product, one per
    /// (recorded time, receiver) entry, shared across sources.
    fn data_weights(&self) -> Array2<f64>;
}

/// An evaluatable approximation of the inverse map, `g -> velocity field`,
/// optionally with an input-VJP used by the model-space gradient.
pub trait InverseOperator: Sync {
    fn apply(&self, g: &DataBundle) -> Result<MeshField>;

    /// Pull a mesh-space cotangent back to data space through the operator's
    /// Jacobian at `g`. Not every operator provides one.
    fn vjp(&self, _g: &DataBundle, _cotangent: &MeshField) -> Result<DataBundle> {
        Err(FwiError::MissingVjp)
    }
}

/// The wave-equation forward map for a fixed grid and source battery.
pub struct WaveForward {
    pub grid: GridSpec,
    pub sources: Vec<SourceProfile>,
}

impl WaveForward {
    pub fn new(grid: GridSpec, sources: Vec<SourceProfile>) -> Self {
        WaveForward { grid, sources }
    }

    /// Forward solves that also keep the trajectories, one per source.
    pub fn apply_with_trajectories(
        &self,
        m: &MeshField,
    ) -> Result<(DataBundle, Vec<WavefieldTrajectory>)> {
        let results: Vec<Result<_>> = self
            .sources
            .par_iter()
            .map(|src| solve_forward(m, src, &self.grid, true))
            .collect();
        let mut records = Vec::with_capacity(self.sources.len());
        let mut trajectories = Vec::with_capacity(self.sources.len());
        for r in results {
            let (rec, traj) = r?;
            records.push(rec);
            trajectories.push(traj.expect("trajectory requested"));
        }
        Ok((DataBundle::from_records(records), trajectories))
    }
}

impl ForwardOperator for WaveForward {
    fn apply(&self, m: &MeshField) -> Result<DataBundle> {
        let results: Vec<Result<_>> = self
            .sources
            .par_iter()
            .map(|src| solve_forward(m, src, &self.grid, false))
            .collect();
        let mut records = Vec::with_capacity(self.sources.len());
        for r in results {
            records.push(r?.0);
        }
        Ok(DataBundle::from_records(records))
    }

    fn data_weights(&self) -> Array2<f64> {
        objective::bundle_weights(&self.grid)
    }
}

/// Network-backed inverse operator: predictor-head features decoded through
/// the feature map onto the solver mesh.
pub struct NetworkInverse {
    pub params: NetworkParams,
    pub spec: NetworkSpec,
    pub grid: GridSpec,
}

impl NetworkInverse {
    pub fn new(params: NetworkParams, spec: NetworkSpec, grid: GridSpec) -> Result<Self> {
        spec.validate()?;
        grid.validate()?;
        Ok(NetworkInverse { params, spec, grid })
    }

    fn check_shape(&self, g: &DataBundle) -> Result<()> {
        let dims = self.spec.input_dims;
        if g.data.dim() != (dims.ns, dims.nt_rec, dims.nd) {
            return Err(FwiError::invalid(format!(
                "bundle shape {:?} does not match network input {:?}",
                g.data.dim(),
                (dims.ns, dims.nt_rec, dims.nd)
            )));
        }
        Ok(())
    }
}

impl InverseOperator for NetworkInverse {
    fn apply(&self, g: &DataBundle) -> Result<MeshField> {
        self.check_shape(g)?;
        let features = nn::predict(&self.params, &self.spec, g.flat())?;
        self.spec.feature.decode(&features, &self.grid)
    }

    fn vjp(&self, g: &DataBundle, cotangent: &MeshField) -> Result<DataBundle> {
        self.check_shape(g)?;
        let features = nn::predict(&self.params, &self.spec, g.flat())?;
        let feat_cot = self
            .spec
            .feature
            .decode_vjp(&features, cotangent, &self.grid)?;
        let flat = nn::vjp_input(&self.params, &self.spec, g.flat(), &feat_cot)?;
        let dims = self.spec.input_dims;
        DataBundle::from_flat(dims.ns, dims.nt_rec, dims.nd, flat)
    }
}

// ---------------------------------------------------------------------------
// Test-harness operators: cheap, exactly characterizable forward/inverse
// pairs used to validate the reconstruction machinery in isolation.
// ---------------------------------------------------------------------------

/// Embeds a mesh field as a single-source bundle, entry for entry.
pub struct IdentityEmbedForward {
    pub n: usize,
}

impl ForwardOperator for IdentityEmbedForward {
    fn apply(&self, m: &MeshField) -> Result<DataBundle> {
        if m.n() != self.n {
            return Err(FwiError::invalid("field size mismatch"));
        }
        Ok(DataBundle {
            data: Array3::from_shape_vec(
                (1, self.n, self.n),
                m.values.iter().copied().collect(),
            )
            .unwrap(),
        })
    }

    fn data_weights(&self) -> Array2<f64> {
        Array2::ones((self.n, self.n))
    }
}

/// Affine mock inverse over [`IdentityEmbedForward`] bundles:
/// `apply(g) = scale * unpack(g) + offset`. With `scale = 1` and no offset it
/// inverts the embedding exactly; `scale = 0.5` models a shrinking
/// approximate inverse; a fixed offset of norm epsilon models a uniformly
/// epsilon-accurate inverse.
pub struct AffineInverseMock {
    pub n: usize,
    pub scale: f64,
    pub offset: Option<MeshField>,
}

impl InverseOperator for AffineInverseMock {
    fn apply(&self, g: &DataBundle) -> Result<MeshField> {
        let (ns, nr, nc) = g.data.dim();
        if (ns, nr, nc) != (1, self.n, self.n) {
            return Err(FwiError::invalid("bundle shape mismatch"));
        }
        let mut values = Array2::from_shape_vec(
            (self.n, self.n),
            g.data.iter().map(|v| v * self.scale).collect(),
        )
        .unwrap();
        if let Some(off) = &self.offset {
            values += &off.values;
        }
        Ok(MeshField { values })
    }

    fn vjp(&self, _g: &DataBundle, cotangent: &MeshField) -> Result<DataBundle> {
        Ok(DataBundle {
            data: Array3::from_shape_vec(
                (1, self.n, self.n),
                cotangent.values.iter().map(|v| v * self.scale).collect(),
            )
            .unwrap(),
        })
    }
}

/// An inverse mock that returns a fixed field regardless of the input; the
/// degenerate "perfectly trained on one model" case.
pub struct ConstantInverse {
    pub field: MeshField,
}

impl InverseOperator for ConstantInverse {
    fn apply(&self, _g: &DataBundle) -> Result<MeshField> {
        Ok(self.field.clone())
    }

    fn vjp(&self, g: &DataBundle, _cotangent: &MeshField) -> Result<DataBundle> {
        let (ns, nt, nd) = g.data.dim();
        Ok(DataBundle {
            data: Array3::zeros((ns, nt, nd)),
        })
    }
}
