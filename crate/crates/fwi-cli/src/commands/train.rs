use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_config, TrainCliConfig};
use crate::provenance;
use fwi_core::analysis::{emit_report, LossRow, Report, ReportFormat};
use fwi_core::datagen::{read_dataset, split_indices, Dataset};
use fwi_core::nn::{save_checkpoint, train, CheckpointMeta, InputDims, NetworkSpec, TrainData};
use fwi_core::velocity::FeatureKind;
use fwi_core::Result;

fn gather(ds: &Dataset, idx: &[usize]) -> (Array2<f64>, Array2<f64>) {
    let x = Array2::from_shape_fn((idx.len(), ds.signals.ncols()), |(r, c)| {
        ds.signals[[idx[r], c]]
    });
    let t = Array2::from_shape_fn((idx.len(), ds.targets.ncols()), |(r, c)| {
        ds.targets[[idx[r], c]]
    });
    (x, t)
}

/// Velocity range spanned by the training family, recorded for later clamp
/// selection.
fn velocity_range(ds: &Dataset) -> Option<[f64; 2]> {
    match (&ds.manifest.rescale_range, &ds.manifest.feature.kind) {
        (Some(r), _) => Some(*r),
        (
            None,
            FeatureKind::Gaussian {
                components,
                background,
            },
        ) => Some([*background, background + 5.0 * *components as f64]),
        _ => None,
    }
}

pub fn run(data: &Path, config_path: &Path, out: &Path) -> Result<()> {
    let cli: TrainCliConfig = parse_config(config_path)?;
    let ds = read_dataset(data)?;
    let [_, ns, nt_rec, nd] = ds.manifest.signals_shape;

    let mut feature = ds.manifest.feature.clone();
    if let Some(mu) = &cli.mu {
        feature.mu = mu.clone();
        feature.validate()?;
    }
    // normalize inputs by the dataset rms so activations start at unit scale
    let rms = {
        let count = ds.signals.len().max(1);
        (ds.signals.iter().map(|v| v * v).sum::<f64>() / count as f64).sqrt()
    };
    let spec = NetworkSpec {
        input_dims: InputDims { nt_rec, nd, ns },
        latent_dim: cli.network.latent_dim,
        hidden_width: cli.network.hidden_width,
        encoder_blocks: cli.network.encoder_blocks,
        decoder_blocks: cli.network.decoder_blocks,
        predictor_blocks: cli.network.predictor_blocks,
        activation: Default::default(),
        feature,
        input_scale: if rms > 0.0 { rms } else { 1.0 },
    };
    let train_config = cli.train.clone().unwrap_or_default();

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let (train_idx, val_idx) = split_indices(ds.manifest.n_samples, cli.split_fraction, &mut rng);
    let (xt, tt) = gather(&ds, &train_idx);
    let (xv, tv) = gather(&ds, &val_idx);
    let (params, history) = train(
        &spec,
        &train_config,
        TrainData {
            inputs: &xt,
            targets: &tt,
        },
        Some(TrainData {
            inputs: &xv,
            targets: &tv,
        }),
    )?;

    let meta = CheckpointMeta {
        train_config: Some(train_config),
        loss_history: history.clone(),
        dataset_seed: Some(ds.manifest.seed),
        velocity_range: velocity_range(&ds),
    };
    save_checkpoint(out, &params, &spec, &meta)?;
    let geometry = super::Geometry {
        grid: ds.manifest.grid.clone(),
        sources: ds.manifest.sources.clone(),
    };
    std::fs::write(
        out.join("geometry.json"),
        serde_json::to_string_pretty(&geometry)?,
    )?;
    let rows: Vec<LossRow> = history
        .iter()
        .map(|h| LossRow {
            epoch: h.epoch,
            learning_rate: h.learning_rate,
            train_loss: h.train_loss,
            val_loss: h.val_loss,
        })
        .collect();
    emit_report(
        &Report::Losses { rows },
        &out.join("loss_history.csv"),
        ReportFormat::Csv,
    )?;
    provenance::write(out, "train", provenance::config_hash(&cli), None)?;
    if let Some(last) = history.last() {
        println!(
            "{}",
            serde_json::json!({
                "checkpoint": out,
                "epochs": history.len(),
                "final_train_loss": last.train_loss,
                "final_val_loss": last.val_loss,
            })
        );
    }
    Ok(())
}
