use std::fmt::Write as _;
use std::path::Path;

use super::{load_model, write_field, write_signal};
use crate::provenance;
use fwi_core::analysis::{band_mean_abs, error_norms, spectral_error, stability_ratio};
use fwi_core::datagen::read_dataset;
use fwi_core::inversion::{NetworkInverse, WaveForward};
use fwi_core::nn;
use fwi_core::velocity::FeatureKind;
use fwi_core::{FwiError, Result};

/// Validation metrics over a dataset: per-sample field errors, spectral
/// error means split by frequency band, and the empirical stability ratio of
/// the learned operator over sample pairs.
pub fn run(model: &Path, data: &Path, out: &Path, limit: Option<usize>) -> Result<()> {
    let loaded = load_model(model)?;
    let ds = read_dataset(data)?;
    if ds.manifest.feature != loaded.spec.feature {
        return Err(FwiError::invalid(
            "dataset feature spec does not match the model",
        ));
    }
    let grid = loaded.grid.clone();
    let n_eval = limit.unwrap_or(ds.manifest.n_samples).min(ds.manifest.n_samples);
    if n_eval == 0 {
        return Err(FwiError::invalid("dataset has no samples to evaluate"));
    }
    let op = NetworkInverse::new(loaded.params.clone(), loaded.spec.clone(), grid.clone())?;

    let spectral_modes = match loaded.spec.feature.kind {
        FeatureKind::Fourier { modes } => modes.max(6),
        _ => 6,
    };
    let mut csv = String::from("index,l2_error,linf_error,low_band_mae,high_band_mae\n");
    let mut l2s = Vec::with_capacity(n_eval);
    let mut lows = Vec::with_capacity(n_eval);
    let mut highs = Vec::with_capacity(n_eval);
    let mut fields = Vec::new();
    for idx in 0..n_eval {
        let g = ds.signal_bundle(idx);
        let pred_features = nn::predict(&loaded.params, &loaded.spec, g.flat())?;
        let pred = loaded.spec.feature.decode(&pred_features, &grid)?;
        let truth = loaded
            .spec
            .feature
            .decode(ds.targets.row(idx).as_slice().unwrap(), &grid)?;
        let (l2, linf) = error_norms(&truth, &pred, &grid);
        let delta = spectral_error(&truth, &pred, spectral_modes, &grid)?;
        let (low, high) = band_mean_abs(&delta, 2, 4);
        let _ = writeln!(csv, "{idx},{l2},{linf},{low},{high}");
        l2s.push(l2);
        lows.push(low);
        highs.push(high);
        if idx < 2 {
            fields.push((idx, g, truth, pred));
        }
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("per_sample.csv"), csv)?;
    // the first signals and predictions double as regression artifacts: a
    // 1-term reconstruction of sig<i> must reproduce pred<i> exactly
    for (idx, g, truth, pred) in &fields {
        write_signal(&out.join(format!("sig{idx}.json")), g)?;
        write_field(&out.join(format!("pred{idx}.json")), pred)?;
        write_field(&out.join(format!("true{idx}.json")), truth)?;
    }

    // operator stability over consecutive sample pairs
    let wf = WaveForward::new(grid.clone(), loaded.sources.clone());
    let mut ratios = Vec::new();
    for idx in 0..n_eval.saturating_sub(1).min(8) {
        let a = loaded
            .spec
            .feature
            .decode(ds.targets.row(idx).as_slice().unwrap(), &grid)?;
        let b = loaded
            .spec
            .feature
            .decode(ds.targets.row(idx + 1).as_slice().unwrap(), &grid)?;
        ratios.push(stability_ratio(&op, &wf, &a, &b)?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let summary = serde_json::json!({
        "samples": n_eval,
        "mean_l2_error": mean(&l2s),
        "median_l2_error": median(&mut l2s.clone()),
        "mean_low_band_abs_error": mean(&lows),
        "mean_high_band_abs_error": mean(&highs),
        "stability_ratio_max": ratios.iter().cloned().fold(0.0f64, f64::max),
        "stability_ratio_mean": mean(&ratios),
    });
    std::fs::write(out.join("eval.json"), serde_json::to_string_pretty(&summary)?)?;
    provenance::write(out, "eval", provenance::config_hash(&n_eval), None)?;
    println!("{summary}");
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}
