// dress rehearsal of the expensive acceptance path; scratch, not shipped
use fwi_core::datagen::*;
use fwi_core::inversion::*;
use fwi_core::nn::*;
use fwi_core::velocity::*;
use fwi_core::wave::*;
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let grid = GridSpec::table1(ReceiverSide::Bottom);
    let sources = standard_sources(&grid, 3);
    let feature = FeatureSpec::with_default_mu(FeatureKind::Gaussian { components: 2, background: 10.0 });
    let config = SynthesisConfig {
        grid: grid.clone(),
        sources: sources.clone(),
        feature: feature.clone(),
        alpha: 0.0,
        n_samples: 20000,
        noise: NoiseSpec::none(),
        rescale_range: None,
        enrichment_modes: None,
    };
    let dir = std::path::Path::new("/tmp/desk_gauss");
    let t0 = Instant::now();
    if !dir.join("manifest.json").exists() {
        synthesize(&config, 11, dir).unwrap();
        println!("synth 20000: {:.0}s", t0.elapsed().as_secs_f64());
    }
    let ds = read_dataset(dir).unwrap();
    let rms = (ds.signals.iter().map(|v| v * v).sum::<f64>() / ds.signals.len() as f64).sqrt();
    println!("rms {rms:.5}");

    let spec = NetworkSpec {
        input_dims: InputDims { nt_rec: 51, nd: 51, ns: 3 },
        latent_dim: 96,
        hidden_width: 96,
        encoder_blocks: 10,
        decoder_blocks: 5,
        predictor_blocks: 10,
        activation: Default::default(),
        feature: feature.clone(),
        input_scale: rms,
    };
    let tcfg = TrainConfig { seed: 3, ..Default::default() };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let (tr, va) = split_indices(ds.manifest.n_samples, 0.8, &mut rng);
    let gather = |idx: &[usize]| {
        let x = ndarray::Array2::from_shape_fn((idx.len(), ds.signals.ncols()), |(r, c)| ds.signals[[idx[r], c]]);
        let t = ndarray::Array2::from_shape_fn((idx.len(), ds.targets.ncols()), |(r, c)| ds.targets[[idx[r], c]]);
        (x, t)
    };
    let (xtr, ttr) = gather(&tr);
    let (xva, tva) = gather(&va[..1000.min(va.len())].to_vec());
    drop(ds);
    let t1 = Instant::now();
    let (params, hist) = train(&spec, &tcfg,
        TrainData { inputs: &xtr, targets: &ttr },
        Some(TrainData { inputs: &xva, targets: &tva })).unwrap();
    println!("train 50 epochs: {:.0}s", t1.elapsed().as_secs_f64());
    for h in hist.iter().step_by(5).chain(hist.last()) {
        println!("epoch {:2} train {:.4} val {:.4}", h.epoch, h.train_loss, h.val_loss.unwrap());
    }
    save_checkpoint(std::path::Path::new("/tmp/desk_gauss_ckpt"), &params, &spec, &CheckpointMeta::default()).unwrap();

    let op = NetworkInverse::new(params, spec, grid.clone()).unwrap();
    let wf = WaveForward::new(grid.clone(), sources.clone());
    let clamp = cfl_safe_clamp(&grid, 5.0, 40.0);
    println!("clamp {:?}", clamp);
    let n_tests = 20;
    let jmax = 40;
    let mut clean = vec![vec![]; jmax];
    let mut noisy = vec![vec![]; jmax];
    let t2 = Instant::now();
    for i in 0..n_tests {
        let seed = split_seed(900_001, i);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let gm = sample_gaussian(2, 1.0, 1.0, &mut rng);
        let truth = eval_gaussian(&gm, &grid).unwrap();
        let g = ForwardOperator::apply(&wf, &truth).unwrap();
        let gn = add_noise(&g, &NoiseSpec { kind: NoiseKind::Additive, level: 0.1 }, &mut rng);
        let opts = NeumannOpts { terms: jmax, clamp: Some(clamp), keep_iterates: true };
        let r = neumann_reconstruct(&op, &g, &wf, &opts).unwrap();
        let rn = neumann_reconstruct(&op, &gn, &wf, &opts).unwrap();
        for j in 0..jmax {
            clean[j].push(fwi_core::analysis::error_norms(&truth, &r.iterates[j], &grid).0);
            noisy[j].push(fwi_core::analysis::error_norms(&truth, &rn.iterates[j], &grid).0);
        }
        if i < 5 {
            println!("test {i}: clean J1 {:.3e} J20 {:.3e} J40 {:.3e} | noisy J20 {:.3e} J40 {:.3e} clamps {}",
                clean[0][i as usize], clean[19][i as usize], clean[39][i as usize],
                noisy[19][i as usize], noisy[39][i as usize], r.clamp_events + rn.clamp_events);
        }
    }
    println!("recon {:.0}s", t2.elapsed().as_secs_f64());
    let med = |v: &[f64]| { let mut s = v.to_vec(); s.sort_by(|a, b| a.partial_cmp(b).unwrap()); s[s.len() / 2] };
    for j in [0usize, 4, 9, 19, 39] {
        println!("J={:2}: clean median {:.4e}  noisy median {:.4e}", j + 1, med(&clean[j]), med(&noisy[j]));
    }
    println!("criterion5 clean ratio J1/J20 = {:.1}", med(&clean[0]) / med(&clean[19]));
    println!("criterion5 noisy plateau J40/J20 = {:.3}", med(&noisy[39]) / med(&noisy[19]));
}
