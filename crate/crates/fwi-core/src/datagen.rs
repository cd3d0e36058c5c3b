//! Dataset synthesis and persistence: pair sampled velocity models with
//! forward-solved receiver traces, optionally inject noise, and store
//! everything in a portable directory format (JSON manifest plus raw
//! little-endian f64 tensors) that any language can read with a trivial
//! loader.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::velocity::{
    self, eval_fourier, eval_gaussian, fourier_features, gaussian_features, sample_fourier,
    sample_gaussian, FeatureKind, FeatureSpec, FourierCoeffs, MeshField,
};
use crate::wave::{cfl_max_dt, solve_forward, DataBundle, GridSpec, SourceProfile};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Multiplicative,
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            level: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0) {
            return Err(FwiError::invalid("noise level must be >= 0"));
        }
        Ok(())
    }
}

/// Everything needed to synthesize a dataset, short of the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub grid: GridSpec,
    pub sources: Vec<SourceProfile>,
    pub feature: FeatureSpec,
    /// Decay exponent for cosine-coefficient sampling (fourier and mesh kinds).
    pub alpha: f64,
    pub n_samples: usize,
    pub noise: NoiseSpec,
    /// Velocity range targeted by the per-sample affine rescale. Required for
    /// cosine-sampled kinds (raw fields are not positive); must be absent for
    /// the gaussian kind, whose background is part of the feature encoding.
    pub rescale_range: Option<[f64; 2]>,
    /// When set, enrich each cosine sample with modes up to this count per
    /// direction whose in-band coefficients are zero; the stored target stays
    /// the in-band block.
    pub enrichment_modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub grid: GridSpec,
    pub sources: Vec<SourceProfile>,
    pub feature: FeatureSpec,
    pub alpha: f64,
    pub n_samples: usize,
    pub noise: NoiseSpec,
    pub rescale_range: Option<[f64; 2]>,
    pub enrichment_modes: Option<usize>,
    pub seed: u64,
    pub dtype: String,
    /// (N, n_sources, nt_rec, n_receivers)
    pub signals_shape: [usize; 4],
    /// (N, feature dim)
    pub targets_shape: [usize; 2],
}

/// A dataset loaded in memory; signals are flattened per sample in
/// (source, time, receiver) row-major order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub signals: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Dataset {
    pub fn signal_bundle(&self, index: usize) -> DataBundle {
        let [_, ns, nt, nd] = self.manifest.signals_shape;
        let row = self.signals.row(index);
        DataBundle {
            data: Array3::from_shape_vec((ns, nt, nd), row.to_vec()).unwrap(),
        }
    }
}

/// Derive a per-sample seed from the base seed; splitmix64 finalizer.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ceiling velocity any sample can reach, used for the up-front CFL check.
fn velocity_ceiling(config: &SynthesisConfig) -> f64 {
    match (&config.rescale_range, &config.feature.kind) {
        (Some([_, hi]), _) => *hi,
        (
            None,
            FeatureKind::Gaussian {
                components,
                background,
            },
        ) => background + 5.0 * *components as f64,
        (None, _) => f64::INFINITY,
    }
}

fn validate_config(config: &SynthesisConfig) -> Result<()> {
    config.grid.validate()?;
    config.feature.validate()?;
    config.noise.validate()?;
    if config.sources.is_empty() {
        return Err(FwiError::invalid("at least one source is required"));
    }
    match &config.feature.kind {
        FeatureKind::Gaussian { .. } => {
            if config.rescale_range.is_some() {
                return Err(FwiError::invalid(
                    "gaussian-kind samples carry their background in the features; rescale is not supported",
                ));
            }
            if config.enrichment_modes.is_some() {
                return Err(FwiError::invalid(
                    "enrichment applies to cosine-sampled kinds only",
                ));
            }
        }
        FeatureKind::Fourier { modes } => {
            if config.rescale_range.is_none() {
                return Err(FwiError::invalid(
                    "fourier-kind samples must be rescaled into a positive velocity range",
                ));
            }
            if let Some(m_in) = config.enrichment_modes {
                if m_in <= *modes {
                    return Err(FwiError::invalid(
                        "enrichment_modes must exceed the output mode count",
                    ));
                }
            }
        }
        FeatureKind::Mesh { nodes_per_side } => {
            if *nodes_per_side != config.grid.nodes_per_side() {
                return Err(FwiError::invalid("mesh feature size does not match grid"));
            }
            if config.rescale_range.is_none() {
                return Err(FwiError::invalid(
                    "mesh-kind samples must be rescaled into a positive velocity range",
                ));
            }
        }
    }
    if let Some([lo, hi]) = config.rescale_range {
        if !(lo > 0.0 && hi > lo) {
            return Err(FwiError::invalid("rescale range must satisfy 0 < lo < hi"));
        }
    }
    let ceiling = velocity_ceiling(config);
    if ceiling.is_finite() {
        let admissible = cfl_max_dt(&config.grid, ceiling)?;
        if config.grid.dt > admissible {
            return Err(FwiError::CflViolation {
                dt: config.grid.dt,
                admissible,
            });
        }
    }
    Ok(())
}

/// Mesh-kind targets are still generated from cosine samples; this picks how
/// many modes the sampler uses.
fn mesh_sample_modes(grid: &GridSpec) -> usize {
    (grid.cells_per_side / 2).max(1)
}

/// Draw one velocity sample and its stored feature target.
fn draw_sample(config: &SynthesisConfig, rng: &mut ChaCha8Rng) -> Result<(MeshField, Vec<f64>)> {
    let grid = &config.grid;
    match &config.feature.kind {
        FeatureKind::Gaussian { components, .. } => {
            let gm = sample_gaussian(*components, grid.length_x, grid.depth_z, rng);
            let field = eval_gaussian(&gm, grid)?;
            let target = gaussian_features(&gm)?;
            Ok((field, target))
        }
        FeatureKind::Fourier { modes } => {
            let coeffs = sample_fourier(*modes, config.alpha, rng);
            let (field, in_band) = cosine_sample_field(config, coeffs, *modes, rng)?;
            Ok((field, fourier_features(&in_band)))
        }
        FeatureKind::Mesh { .. } => {
            let modes = mesh_sample_modes(grid);
            let coeffs = sample_fourier(modes, config.alpha, rng);
            let (field, _) = cosine_sample_field(config, coeffs, modes, rng)?;
            let target = field.values.iter().copied().collect();
            Ok((field, target))
        }
    }
}

/// Assemble a cosine-sampled field: optional out-of-band enrichment, then the
/// affine rescale; returns the rescaled field and the transformed in-band
/// coefficient block.
fn cosine_sample_field(
    config: &SynthesisConfig,
    in_band: FourierCoeffs,
    modes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(MeshField, FourierCoeffs)> {
    let grid = &config.grid;
    let full = if let Some(m_in) = config.enrichment_modes {
        let mut c = FourierCoeffs::zeros(m_in);
        for kx in 0..m_in {
            for kz in 0..m_in {
                if kx < modes && kz < modes {
                    c.coeffs[[kx, kz]] = in_band.coeffs[[kx, kz]];
                } else {
                    let raw: f64 = rng.gen_range(-0.5..0.5);
                    let damp = (((kx + 1) * (kz + 1)) as f64).powf(-config.alpha);
                    c.coeffs[[kx, kz]] = raw * damp;
                }
            }
        }
        c
    } else {
        in_band.clone()
    };
    let raw_field = eval_fourier(&full, grid);
    let [lo, hi] = config.rescale_range.expect("validated");
    let field = velocity::rescale(&raw_field, lo, hi)?;
    // the affine map a*f + b acts on coefficients as a*c with b added to (0,0)
    let (fmin, fmax) = (raw_field.min(), raw_field.max());
    let a = (hi - lo) / (fmax - fmin);
    let b = lo - fmin * a;
    let mut target = FourierCoeffs::zeros(modes);
    for kx in 0..modes {
        for kz in 0..modes {
            target.coeffs[[kx, kz]] = a * in_band.coeffs[[kx, kz]];
        }
    }
    target.coeffs[[0, 0]] += b;
    Ok((field, target))
}

/// Apply the configured noise to a flat signal block, drawing one standard
/// normal per entry in storage order.
fn apply_noise(signal: &mut [f64], spec: &NoiseSpec, rng: &mut ChaCha8Rng) {
    match spec.kind {
        NoiseKind::None => {}
        NoiseKind::Multiplicative => {
            for v in signal.iter_mut() {
                let xi: f64 = rng.sample(rand_distr::StandardNormal);
                *v *= 1.0 + spec.level * xi;
            }
        }
        NoiseKind::Additive => {
            let rms = (signal.iter().map(|v| v * v).sum::<f64>() / signal.len() as f64).sqrt();
            for v in signal.iter_mut() {
                let xi: f64 = rng.sample(rand_distr::StandardNormal);
                *v += spec.level * rms * xi;
            }
        }
    }
}

/// Add noise to a bundle (out of place); the bundle-wide rms convention for
/// additive noise matches the synthesis path.
pub fn add_noise(bundle: &DataBundle, spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> DataBundle {
    let mut out = bundle.clone();
    apply_noise(out.data.as_slice_mut().unwrap(), spec, rng);
    out
}

/// Generate one sample: velocity draw, forward solves, noise.
fn synthesize_sample(
    config: &SynthesisConfig,
    seed: u64,
    index: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, index as u64));
    let (field, target) = draw_sample(config, &mut rng)?;
    let grid = &config.grid;
    let nt_rec = grid.nt_rec()?;
    let nd = grid.receiver_count();
    let mut signal = Vec::with_capacity(config.sources.len() * nt_rec * nd);
    for src in &config.sources {
        let (rec, _) = solve_forward(&field, src, grid, false)?;
        signal.extend(rec.traces.iter().copied());
    }
    apply_noise(&mut signal, &config.noise, &mut rng);
    Ok((signal, target))
}

/// Synthesize a dataset into `out_dir`. Deterministic for a given seed and
/// config, independent of the worker count: every sample has its own seeded
/// RNG stream and blocks are written in index order.
pub fn synthesize(config: &SynthesisConfig, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    validate_config(config)?;
    let grid = &config.grid;
    let nt_rec = grid.nt_rec()?;
    let nd = grid.receiver_count();
    let ns = config.sources.len();
    let n = config.n_samples;
    let f_dim = config.feature.dim();

    fs::create_dir_all(out_dir)?;
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        grid: grid.clone(),
        sources: config.sources.clone(),
        feature: config.feature.clone(),
        alpha: config.alpha,
        n_samples: n,
        noise: config.noise,
        rescale_range: config.rescale_range,
        enrichment_modes: config.enrichment_modes,
        seed,
        dtype: "f64le".to_string(),
        signals_shape: [n, ns, nt_rec, nd],
        targets_shape: [n, f_dim],
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out_dir.join("manifest.json"), manifest_json)?;

    let mut signals = BufWriter::new(fs::File::create(out_dir.join("signals.bin"))?);
    let mut targets = BufWriter::new(fs::File::create(out_dir.join("targets.bin"))?);
    const CHUNK: usize = 128;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let blocks: Vec<Result<(Vec<f64>, Vec<f64>)>> = (start..end)
            .into_par_iter()
            .map(|j| synthesize_sample(config, seed, j))
            .collect();
        for block in blocks {
            let (sig, tgt) = block?;
            write_f64_slice(&mut signals, &sig)?;
            write_f64_slice(&mut targets, &tgt)?;
        }
        start = end;
    }
    signals.flush()?;
    targets.flush()?;
    Ok(manifest)
}

fn write_f64_slice<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64_file(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != expected_len * 8 {
        return Err(FwiError::CorruptDataset(format!(
            "{} holds {} bytes, manifest implies {}",
            path.display(),
            bytes.len(),
            expected_len * 8
        )));
    }
    let mut out = Vec::with_capacity(expected_len);
    for chunk in bytes.chunks_exact(8) {
        out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(out)
}

/// Load a dataset directory, validating byte counts and spot-checking
/// finiteness of a sampled subset of rows.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| FwiError::CorruptDataset(format!("manifest: {e}")))?;
    if manifest.version != DATASET_VERSION {
        return Err(FwiError::UnsupportedVersion(format!(
            "dataset version {}",
            manifest.version
        )));
    }
    let [n, ns, nt, nd] = manifest.signals_shape;
    let [tn, f_dim] = manifest.targets_shape;
    if tn != n {
        return Err(FwiError::CorruptDataset(
            "signals and targets disagree on sample count".into(),
        ));
    }
    if manifest.n_samples != n {
        return Err(FwiError::CorruptDataset(
            "manifest sample count does not match shapes".into(),
        ));
    }
    let sig_row = ns * nt * nd;
    let signals = read_f64_file(&dir.join("signals.bin"), n * sig_row)?;
    let targets = read_f64_file(&dir.join("targets.bin"), n * f_dim)?;
    let signals = Array2::from_shape_vec((n, sig_row), signals).unwrap();
    let targets = Array2::from_shape_vec((n, f_dim), targets).unwrap();
    let stride = (n / 16).max(1);
    for j in (0..n).step_by(stride) {
        if signals.row(j).iter().any(|v| !v.is_finite())
            || targets.row(j).iter().any(|v| !v.is_finite())
        {
            return Err(FwiError::CorruptDataset(format!(
                "non-finite values in sample {j}"
            )));
        }
    }
    Ok(Dataset {
        manifest,
        signals,
        targets,
    })
}

/// Deterministic disjoint train/test index split covering all samples.
pub fn split_indices<R: Rng>(
    n: usize,
    train_fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "fraction must be in (0, 1)"
    );
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

// ---------------------------------------------------------------------------
// Small self-describing tensor files (JSON header + sibling .bin), used for
// signals, reconstructed fields, and golden regression data.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorHeader {
    pub version: u32,
    pub dtype: String,
    pub shape: Vec<usize>,
    /// Path of the raw data file, relative to the header file.
    pub data: String,
}

/// Write `data` as `<path>.json` + `<path>.bin` (row-major f64le).
pub fn write_tensor(path_json: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(FwiError::invalid("tensor shape does not match data length"));
    }
    let bin_name = path_json
        .file_stem()
        .map(|s| format!("{}.bin", s.to_string_lossy()))
        .ok_or_else(|| FwiError::invalid("tensor path has no file name"))?;
    let header = TensorHeader {
        version: 1,
        dtype: "f64le".into(),
        shape: shape.to_vec(),
        data: bin_name.clone(),
    };
    if let Some(parent) = path_json.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path_json, serde_json::to_string_pretty(&header)?)?;
    let bin_path = sibling(path_json, &bin_name);
    let mut w = BufWriter::new(fs::File::create(bin_path)?);
    write_f64_slice(&mut w, data)?;
    w.flush()?;
    Ok(())
}

fn sibling(path_json: &Path, name: &str) -> PathBuf {
    path_json
        .parent()
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

pub fn read_tensor(path_json: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let header: TensorHeader = serde_json::from_str(&fs::read_to_string(path_json)?)?;
    if header.version != 1 || header.dtype != "f64le" {
        return Err(FwiError::UnsupportedVersion(format!(
            "tensor {} v{}",
            header.dtype, header.version
        )));
    }
    let count: usize = header.shape.iter().product();
    let data = read_f64_file(&sibling(path_json, &header.data), count)
        .map_err(|e| FwiError::CorruptDataset(format!("{}: {e}", path_json.display())))?;
    Ok((header.shape, data))
}
