pub mod eval;
pub mod gen_data;
pub mod hybrid;
pub mod invert;
pub mod landscape;
pub mod train;

use std::path::Path;

use fwi_core::datagen::{read_tensor, write_tensor};
use fwi_core::nn::{load_checkpoint, CheckpointMeta, NetworkParams, NetworkSpec};
use fwi_core::velocity::MeshField;
use fwi_core::wave::{DataBundle, GridSpec};
use fwi_core::{FwiError, Result};

/// Read a signal tensor file shaped (sources, recorded times, receivers).
pub fn read_signal(path: &Path) -> Result<DataBundle> {
    let (shape, data) = read_tensor(path)?;
    if shape.len() != 3 {
        return Err(FwiError::invalid(format!(
            "signal tensor must be 3-dimensional, got shape {shape:?}"
        )));
    }
    DataBundle::from_flat(shape[0], shape[1], shape[2], data)
}

pub fn write_signal(path: &Path, bundle: &DataBundle) -> Result<()> {
    let (ns, nt, nd) = bundle.data.dim();
    write_tensor(path, &[ns, nt, nd], bundle.flat())
}

/// Read a square mesh-field tensor file.
pub fn read_field(path: &Path) -> Result<MeshField> {
    let (shape, data) = read_tensor(path)?;
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(FwiError::invalid(format!(
            "field tensor must be square, got shape {shape:?}"
        )));
    }
    MeshField::from_array(ndarray::Array2::from_shape_vec((shape[0], shape[1]), data).unwrap())
}

pub fn write_field(path: &Path, field: &MeshField) -> Result<()> {
    let n = field.n();
    write_tensor(
        path,
        &[n, n],
        field.values.as_slice().expect("contiguous field"),
    )
}

/// Acquisition geometry a model was trained for, stored next to the
/// checkpoint so online commands can re-run the forward map.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct Geometry {
    pub grid: GridSpec,
    pub sources: Vec<fwi_core::wave::SourceProfile>,
}

pub struct LoadedModel {
    pub params: NetworkParams,
    pub spec: NetworkSpec,
    pub meta: CheckpointMeta,
    pub grid: GridSpec,
    pub sources: Vec<fwi_core::wave::SourceProfile>,
}

/// Load a checkpoint together with its acquisition geometry.
pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let (params, spec, meta) = load_checkpoint(dir)?;
    let geometry: Geometry =
        serde_json::from_str(&std::fs::read_to_string(dir.join("geometry.json"))?)?;
    geometry.grid.validate()?;
    Ok(LoadedModel {
        params,
        spec,
        meta,
        grid: geometry.grid,
        sources: geometry.sources,
    })
}

/// Default iterate clamp: the training velocity range widened to
/// [lo/2, 2 hi], tightened to stay CFL-admissible at the grid's time step.
pub fn default_clamp(meta: &CheckpointMeta, grid: &GridSpec) -> Option<[f64; 2]> {
    meta.velocity_range
        .map(|[lo, hi]| fwi_core::inversion::cfl_safe_clamp(grid, lo / 2.0, 2.0 * hi))
}

pub fn parse_clamp(text: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        return Err(FwiError::invalid("clamp must look like lo:hi"));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| FwiError::invalid("bad clamp lower bound"))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| FwiError::invalid("bad clamp upper bound"))?;
    if !(hi > lo) {
        return Err(FwiError::invalid("clamp needs lo < hi"));
    }
    Ok([lo, hi])
}
