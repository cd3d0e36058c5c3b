//! JSON run configurations. Every document is schema-checked up front:
//! unknown keys are rejected before any work starts.

use serde::{Deserialize, Serialize};

use fwi_core::datagen::{NoiseSpec, SynthesisConfig};
use fwi_core::nn::TrainConfig;
use fwi_core::velocity::{FeatureKind, FeatureSpec};
use fwi_core::wave::{standard_sources, GridSpec, ReceiverSide, SourceProfile};
use fwi_core::{FwiError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one")]
    pub length_x: f64,
    #[serde(default = "one")]
    pub depth_z: f64,
    pub cells_per_side: usize,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub record_start: f64,
    pub record_stride: usize,
    pub receiver_side: ReceiverSide,
}

fn one() -> f64 {
    1.0
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        let grid = GridSpec::new(
            self.length_x,
            self.depth_z,
            self.cells_per_side,
            self.dt,
            self.t_final,
            self.record_start,
            self.record_stride,
            self.receiver_side,
        );
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// The standard battery of difference-of-Gaussians top sources.
    Standard { count: usize },
    /// One difference-of-Gaussians source centered at `a` minus one at `b`.
    GaussPair { a: f64, b: f64 },
    /// Explicit samples on the top-boundary nodes.
    Samples { spatial: Vec<f64> },
}

pub fn build_sources(configs: &[SourceConfig], grid: &GridSpec) -> Result<Vec<SourceProfile>> {
    let mut out = Vec::new();
    for c in configs {
        match c {
            SourceConfig::Standard { count } => {
                if *count == 0 || *count > 7 {
                    return Err(FwiError::invalid("standard source count must be 1..=7"));
                }
                out.extend(standard_sources(grid, *count));
            }
            SourceConfig::GaussPair { a, b } => {
                out.push(SourceProfile::gaussian_pair(grid, *a, *b));
            }
            SourceConfig::Samples { spatial } => {
                out.push(SourceProfile::constant_in_time(spatial.clone()));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureConfig {
    Fourier {
        modes: usize,
        #[serde(default)]
        mu: Option<Vec<f64>>,
    },
    Gaussian {
        components: usize,
        #[serde(default = "ten")]
        background: f64,
        #[serde(default)]
        mu: Option<Vec<f64>>,
    },
    Mesh {
        nodes_per_side: usize,
        #[serde(default)]
        mu: Option<Vec<f64>>,
    },
}

fn ten() -> f64 {
    10.0
}

impl FeatureConfig {
    pub fn build(&self) -> Result<FeatureSpec> {
        let (kind, mu) = match self {
            FeatureConfig::Fourier { modes, mu } => {
                (FeatureKind::Fourier { modes: *modes }, mu.clone())
            }
            FeatureConfig::Gaussian {
                components,
                background,
                mu,
            } => (
                FeatureKind::Gaussian {
                    components: *components,
                    background: *background,
                },
                mu.clone(),
            ),
            FeatureConfig::Mesh { nodes_per_side, mu } => (
                FeatureKind::Mesh {
                    nodes_per_side: *nodes_per_side,
                },
                mu.clone(),
            ),
        };
        let mut spec = FeatureSpec::with_default_mu(kind);
        if let Some(mu) = mu {
            spec.mu = mu;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: fwi_core::datagen::NoiseKind,
    #[serde(default)]
    pub level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub grid: GridConfig,
    pub sources: Vec<SourceConfig>,
    pub feature: FeatureConfig,
    #[serde(default)]
    pub alpha: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub rescale_range: Option<[f64; 2]>,
    #[serde(default)]
    pub enrichment_modes: Option<usize>,
}

impl GenDataConfig {
    pub fn build(&self) -> Result<SynthesisConfig> {
        let grid = self.grid.build()?;
        let sources = build_sources(&self.sources, &grid)?;
        let feature = self.feature.build()?;
        let noise = match &self.noise {
            Some(n) => NoiseSpec {
                kind: n.kind,
                level: n.level,
            },
            None => NoiseSpec::none(),
        };
        Ok(SynthesisConfig {
            grid,
            sources,
            feature,
            alpha: self.alpha,
            n_samples: self.n_samples,
            noise,
            rescale_range: self.rescale_range,
            enrichment_modes: self.enrichment_modes,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "d256")]
    pub latent_dim: usize,
    #[serde(default = "d256")]
    pub hidden_width: usize,
    #[serde(default = "d10")]
    pub encoder_blocks: usize,
    #[serde(default = "d5")]
    pub decoder_blocks: usize,
    #[serde(default = "d10")]
    pub predictor_blocks: usize,
}

fn d256() -> usize {
    256
}
fn d10() -> usize {
    10
}
fn d5() -> usize {
    5
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            latent_dim: 256,
            hidden_width: 256,
            encoder_blocks: 10,
            decoder_blocks: 5,
            predictor_blocks: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCliConfig {
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Overrides the dataset's feature weight vector when present.
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
}

fn default_split() -> f64 {
    0.8
}

pub fn parse_config<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| FwiError::invalid(format!("config {}: {e}", path.display())))
}
