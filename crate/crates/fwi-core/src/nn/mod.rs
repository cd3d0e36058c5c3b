//! A small self-contained neural network stack: dense ResNet-block
//! encoder/decoder/predictor, reverse-mode differentiation for parameter
//! gradients and input-VJPs, and the weighted l1-l2 training loss.
//!
//! The encoder maps a flattened data bundle to a latent vector; the decoder
//! reconstructs the bundle from the latent; the predictor maps the latent to
//! the velocity feature vector. All three are stacks of the form
//! `affine -> blocks -> affine` where each block is
//! `h + W2 act(W1 h + b1) + b2`.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use train::{train, EpochStats, TrainConfig, TrainData};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::velocity::FeatureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub nt_rec: usize,
    pub nd: usize,
    pub ns: usize,
}

impl InputDims {
    pub fn flat(&self) -> usize {
        self.nt_rec * self.nd * self.ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
        }
    }
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { slope: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dims: InputDims,
    pub latent_dim: usize,
    pub hidden_width: usize,
    /// Block counts of the encoder, decoder, and predictor stacks.
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub predictor_blocks: usize,
    pub activation: Activation,
    pub feature: FeatureSpec,
    /// Inputs are divided by this before the encoder and the decoder
    /// reconstructs in the same scaled units; raw wavefield traces are tiny
    /// and would otherwise stall the heads. Fixed at training time.
    #[serde(default = "unit_scale")]
    pub input_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl NetworkSpec {
    /// Default depths: 10 encoder blocks, 5 decoder blocks, 10 predictor
    /// blocks, latent dimension 256.
    pub fn standard(input_dims: InputDims, feature: FeatureSpec) -> Self {
        NetworkSpec {
            input_dims,
            latent_dim: 256,
            hidden_width: 256,
            encoder_blocks: 10,
            decoder_blocks: 5,
            predictor_blocks: 10,
            activation: Activation::default(),
            feature,
            input_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dims.flat() == 0
            || self.latent_dim == 0
            || self.hidden_width == 0
            || self.feature.dim() == 0
        {
            return Err(FwiError::invalid("all network dimensions must be >= 1"));
        }
        if !(self.input_scale > 0.0) || !self.input_scale.is_finite() {
            return Err(FwiError::invalid("input_scale must be positive and finite"));
        }
        self.feature.validate()?;
        Ok(())
    }
}

/// Offset and shape of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    fn len(&self) -> usize {
        self.rows * self.cols.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackLayout {
    pub in_w: Slot,
    pub in_b: Slot,
    /// (w1, b1, w2, b2) per block.
    pub blocks: Vec<(Slot, Slot, Slot, Slot)>,
    pub out_w: Slot,
    pub out_b: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub encoder: StackLayout,
    pub decoder: StackLayout,
    pub predictor: StackLayout,
    pub total: usize,
}

fn stack_layout(cursor: &mut usize, d_in: usize, width: usize, blocks: usize, d_out: usize) -> StackLayout {
    let mut slot = |rows: usize, cols: usize| -> Slot {
        let s = Slot {
            offset: *cursor,
            rows,
            cols,
        };
        *cursor += s.len();
        s
    };
    let in_w = slot(width, d_in);
    let in_b = slot(width, 0);
    let blocks = (0..blocks)
        .map(|_| {
            (
                slot(width, width),
                slot(width, 0),
                slot(width, width),
                slot(width, 0),
            )
        })
        .collect();
    let out_w = slot(d_out, width);
    let out_b = slot(d_out, 0);
    StackLayout {
        in_w,
        in_b,
        blocks,
        out_w,
        out_b,
    }
}

impl Layout {
    pub fn new(spec: &NetworkSpec) -> Layout {
        let d_in = spec.input_dims.flat();
        let w = spec.hidden_width;
        let mut cursor = 0;
        let encoder = stack_layout(&mut cursor, d_in, w, spec.encoder_blocks, spec.latent_dim);
        let decoder = stack_layout(&mut cursor, spec.latent_dim, w, spec.decoder_blocks, d_in);
        let predictor = stack_layout(
            &mut cursor,
            spec.latent_dim,
            w,
            spec.predictor_blocks,
            spec.feature.dim(),
        );
        Layout {
            encoder,
            decoder,
            predictor,
            total: cursor,
        }
    }
}

/// Flat parameter vector plus the layout that maps slots into it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub data: Vec<f64>,
    pub layout: Layout,
}

impl NetworkParams {
    pub fn matrix<'a>(&'a self, slot: &Slot) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape(
            (slot.rows, slot.cols),
            &self.data[slot.offset..slot.offset + slot.len()],
        )
        .unwrap()
    }

    pub fn bias<'a>(&'a self, slot: &Slot) -> &'a [f64] {
        &self.data[slot.offset..slot.offset + slot.rows]
    }
}

/// Scaled random initialization: weights are normal with variance 2/fan-in,
/// biases zero. Deterministic for a fixed seed.
pub fn init_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<NetworkParams> {
    spec.validate()?;
    let layout = Layout::new(spec);
    let mut data = vec![0.0; layout.total];
    let mut fill = |slot: &Slot| {
        if slot.cols == 0 {
            return; // biases stay zero
        }
        let std = (2.0 / slot.cols as f64).sqrt();
        for v in data[slot.offset..slot.offset + slot.len()].iter_mut() {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *v = std * z;
        }
    };
    for stack in [&layout.encoder, &layout.decoder, &layout.predictor] {
        fill(&stack.in_w);
        fill(&stack.in_b);
        for (w1, b1, w2, b2) in &stack.blocks {
            fill(w1);
            fill(b1);
            fill(w2);
            fill(b2);
        }
        fill(&stack.out_w);
        fill(&stack.out_b);
    }
    Ok(NetworkParams { data, layout })
}

/// Intermediate activations of one stack, kept for the backward pass.
struct StackTape {
    input: Array2<f64>,
    /// Hidden state entering each block.
    block_inputs: Vec<Array2<f64>>,
    /// Pre-activation z = h W1^T + b1 of each block.
    block_z: Vec<Array2<f64>>,
    /// Hidden state entering the output affine.
    last_hidden: Array2<f64>,
}

fn affine(x: &ArrayView2<f64>, w: &ArrayView2<f64>, b: &[f64]) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    for mut row in y.rows_mut() {
        for (v, bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
    y
}

/// Residual branches are scaled by `1/sqrt(2 n)` so a depth-n stack keeps
/// its output variance comparable to its input at initialization; without
/// this the pinned 2/fan-in init makes deep stacks blow up by sqrt(2) per
/// block.
fn branch_scale(blocks: usize) -> f64 {
    if blocks == 0 {
        1.0
    } else {
        (2.0 * blocks as f64).powf(-0.5)
    }
}

fn stack_forward(
    params: &NetworkParams,
    layout: &StackLayout,
    act: &Activation,
    x: ArrayView2<f64>,
) -> (Array2<f64>, StackTape) {
    let mut h = affine(&x, &params.matrix(&layout.in_w), params.bias(&layout.in_b));
    let mut block_inputs = Vec::with_capacity(layout.blocks.len());
    let mut block_z = Vec::with_capacity(layout.blocks.len());
    let alpha = branch_scale(layout.blocks.len());
    for (w1, b1, w2, b2) in &layout.blocks {
        let z = affine(&h.view(), &params.matrix(w1), params.bias(b1));
        let a = z.mapv(|v| act.apply(v));
        let branch = affine(&a.view(), &params.matrix(w2), params.bias(b2));
        let mut out = h.clone();
        out.scaled_add(alpha, &branch);
        block_inputs.push(h);
        block_z.push(z);
        h = out;
    }
    let y = affine(&h.view(), &params.matrix(&layout.out_w), params.bias(&layout.out_b));
    let tape = StackTape {
        input: x.to_owned(),
        block_inputs,
        block_z,
        last_hidden: h,
    };
    (y, tape)
}

/// Backward pass through one stack. Accumulates parameter gradients into
/// `grad` and returns the gradient with respect to the stack input.
fn stack_backward(
    params: &NetworkParams,
    layout: &StackLayout,
    act: &Activation,
    tape: &StackTape,
    d_out: &Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let add_matrix = |grad: &mut [f64], slot: &Slot, m: &Array2<f64>| {
        let dst = &mut grad[slot.offset..slot.offset + slot.len()];
        for (d, s) in dst.iter_mut().zip(m.iter()) {
            *d += s;
        }
    };
    let add_bias = |grad: &mut [f64], slot: &Slot, d: &Array2<f64>| {
        let dst = &mut grad[slot.offset..slot.offset + slot.rows];
        for row in d.rows() {
            for (g, v) in dst.iter_mut().zip(row.iter()) {
                *g += v;
            }
        }
    };

    // output affine
    add_matrix(grad, &layout.out_w, &d_out.t().dot(&tape.last_hidden));
    add_bias(grad, &layout.out_b, d_out);
    let mut dh = d_out.dot(&params.matrix(&layout.out_w));

    let alpha = branch_scale(layout.blocks.len());
    for (idx, (w1, b1, w2, b2)) in layout.blocks.iter().enumerate().rev() {
        let z = &tape.block_z[idx];
        let h_in = &tape.block_inputs[idx];
        let a = z.mapv(|v| act.apply(v));
        // residual branch: h + alpha (W2 a + b2)
        let d_branch = dh.mapv(|v| alpha * v);
        add_matrix(grad, w2, &d_branch.t().dot(&a));
        add_bias(grad, b2, &d_branch);
        let da = d_branch.dot(&params.matrix(w2));
        let mut dz = da;
        ndarray::Zip::from(&mut dz).and(z).for_each(|d, &zv| {
            *d *= act.derivative(zv);
        });
        add_matrix(grad, w1, &dz.t().dot(h_in));
        add_bias(grad, b1, &dz);
        dh += &dz.dot(&params.matrix(w1));
    }

    add_matrix(grad, &layout.in_w, &dh.t().dot(&tape.input));
    add_bias(grad, &layout.in_b, &dh);
    dh.dot(&params.matrix(&layout.in_w))
}

/// Evaluate both heads for one flattened bundle: the decoder reconstruction
/// and the predicted feature vector.
pub fn forward(params: &NetworkParams, spec: &NetworkSpec, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if g.len() != spec.input_dims.flat() {
        return Err(FwiError::invalid(format!(
            "input has {} entries, network expects {}",
            g.len(),
            spec.input_dims.flat()
        )));
    }
    let scaled: Vec<f64> = g.iter().map(|v| v / spec.input_scale).collect();
    let x = ArrayView2::from_shape((1, g.len()), &scaled).unwrap();
    let (latent, _) = stack_forward(params, &params.layout.encoder, &spec.activation, x);
    let (rec, _) = stack_forward(params, &params.layout.decoder, &spec.activation, latent.view());
    let (pred, _) = stack_forward(
        params,
        &params.layout.predictor,
        &spec.activation,
        latent.view(),
    );
    let rec_raw: Vec<f64> = rec.iter().map(|v| v * spec.input_scale).collect();
    Ok((rec_raw, pred.into_raw_vec_and_offset().0))
}

/// Predict the feature vector only (encoder + predictor path).
pub fn predict(params: &NetworkParams, spec: &NetworkSpec, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != spec.input_dims.flat() {
        return Err(FwiError::invalid("input length mismatch"));
    }
    let scaled: Vec<f64> = g.iter().map(|v| v / spec.input_scale).collect();
    let x = ArrayView2::from_shape((1, g.len()), &scaled).unwrap();
    let (latent, _) = stack_forward(params, &params.layout.encoder, &spec.activation, x);
    let (pred, _) = stack_forward(
        params,
        &params.layout.predictor,
        &spec.activation,
        latent.view(),
    );
    Ok(pred.into_raw_vec_and_offset().0)
}

/// Loss of one batch: `mean_b [ mean_i |g_i - rec_i| + 1/2 sum_f (mu_f (t_f - p_f))^2 ]`.
///
/// The reconstruction term averages over entries (not sums), which only
/// rescales the learning rate; the feature term is the weighted squared
/// error.
pub fn loss_weighted(
    params: &NetworkParams,
    spec: &NetworkSpec,
    batch_x: &Array2<f64>,
    batch_t: &Array2<f64>,
    mu: &[f64],
) -> Result<f64> {
    let (loss, _) = loss_and_grad_impl(params, spec, batch_x, batch_t, mu, false)?;
    Ok(loss)
}

/// Loss and exact gradient with respect to every parameter. The l1
/// subgradient at zero is taken to be zero.
pub fn loss_and_grad(
    params: &NetworkParams,
    spec: &NetworkSpec,
    batch_x: &Array2<f64>,
    batch_t: &Array2<f64>,
    mu: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = loss_and_grad_impl(params, spec, batch_x, batch_t, mu, true)?;
    Ok((loss, grad.unwrap()))
}

fn loss_and_grad_impl(
    params: &NetworkParams,
    spec: &NetworkSpec,
    batch_x: &Array2<f64>,
    batch_t: &Array2<f64>,
    mu: &[f64],
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let b = batch_x.nrows();
    if b == 0 {
        return Err(FwiError::invalid("batch must be nonempty"));
    }
    let d_in = spec.input_dims.flat();
    let f_dim = spec.feature.dim();
    if batch_x.ncols() != d_in || batch_t.ncols() != f_dim || batch_t.nrows() != b {
        return Err(FwiError::invalid("batch shapes do not match network spec"));
    }
    if mu.len() != f_dim {
        return Err(FwiError::invalid("weight vector length mismatch"));
    }
    let act = &spec.activation;
    let x_scaled = batch_x.mapv(|v| v / spec.input_scale);
    let (latent, enc_tape) = stack_forward(params, &params.layout.encoder, act, x_scaled.view());
    let (rec, dec_tape) = stack_forward(params, &params.layout.decoder, act, latent.view());
    let (pred, pred_tape) =
        stack_forward(params, &params.layout.predictor, act, latent.view());

    // the reconstruction mismatch is measured in normalized input units
    let rec_err = &rec - &x_scaled;
    let l1: f64 = rec_err.iter().map(|v| v.abs()).sum::<f64>() / (b * d_in) as f64;
    let mut l2 = 0.0;
    for r in 0..b {
        for f in 0..f_dim {
            let e = mu[f] * (batch_t[[r, f]] - pred[[r, f]]);
            l2 += 0.5 * e * e;
        }
    }
    l2 /= b as f64;
    let loss = l1 + l2;
    if !want_grad {
        return Ok((loss, None));
    }

    let mut grad = vec![0.0; params.layout.total];
    let scale_l1 = 1.0 / (b * d_in) as f64;
    let d_rec = rec_err.mapv(|v| {
        if v > 0.0 {
            scale_l1
        } else if v < 0.0 {
            -scale_l1
        } else {
            0.0
        }
    });
    let mut d_pred = Array2::<f64>::zeros((b, f_dim));
    for r in 0..b {
        for f in 0..f_dim {
            d_pred[[r, f]] = mu[f] * mu[f] * (pred[[r, f]] - batch_t[[r, f]]) / b as f64;
        }
    }
    let d_latent_dec =
        stack_backward(params, &params.layout.decoder, act, &dec_tape, &d_rec, &mut grad);
    let d_latent_pred = stack_backward(
        params,
        &params.layout.predictor,
        act,
        &pred_tape,
        &d_pred,
        &mut grad,
    );
    let d_latent = &d_latent_dec + &d_latent_pred;
    stack_backward(params, &params.layout.encoder, act, &enc_tape, &d_latent, &mut grad);
    Ok((loss, Some(grad)))
}

/// Input-VJP of the prediction path: returns `J^T c` where `J` is the
/// Jacobian of `g -> predictor(encoder(g))`.
pub fn vjp_input(
    params: &NetworkParams,
    spec: &NetworkSpec,
    g: &[f64],
    cotangent: &[f64],
) -> Result<Vec<f64>> {
    if g.len() != spec.input_dims.flat() {
        return Err(FwiError::invalid("input length mismatch"));
    }
    if cotangent.len() != spec.feature.dim() {
        return Err(FwiError::invalid("cotangent length mismatch"));
    }
    let act = &spec.activation;
    let scaled: Vec<f64> = g.iter().map(|v| v / spec.input_scale).collect();
    let x = ArrayView2::from_shape((1, g.len()), &scaled).unwrap();
    let (latent, enc_tape) = stack_forward(params, &params.layout.encoder, act, x);
    let (_, pred_tape) = stack_forward(params, &params.layout.predictor, act, latent.view());
    let mut scratch = vec![0.0; params.layout.total];
    let d_pred = Array2::from_shape_vec((1, cotangent.len()), cotangent.to_vec()).unwrap();
    let d_latent = stack_backward(
        params,
        &params.layout.predictor,
        act,
        &pred_tape,
        &d_pred,
        &mut scratch,
    );
    let dx = stack_backward(params, &params.layout.encoder, act, &enc_tape, &d_latent, &mut scratch);
    Ok(dx.iter().map(|v| v / spec.input_scale).collect())
}

/// Parameter-space axpy used by the tests and the optimizer.
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::{FeatureKind, FeatureSpec};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            input_dims: InputDims {
                nt_rec: 3,
                nd: 4,
                ns: 1,
            },
            latent_dim: 6,
            hidden_width: 8,
            encoder_blocks: 2,
            decoder_blocks: 1,
            predictor_blocks: 2,
            activation: Activation::default(),
            feature: FeatureSpec::with_default_mu(FeatureKind::Fourier { modes: 2 }),
            input_scale: 1.0,
        }
    }

    fn seeded_params(spec: &NetworkSpec, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_params(spec, &mut rng).unwrap()
    }

    #[test]
    fn init_deterministic_and_scaled() {
        let spec = tiny_spec();
        let p1 = seeded_params(&spec, 1);
        let p2 = seeded_params(&spec, 1);
        assert_eq!(p1.data, p2.data);

        // biases are zero
        for stack in [
            &p1.layout.encoder,
            &p1.layout.decoder,
            &p1.layout.predictor,
        ] {
            assert!(p1.bias(&stack.in_b).iter().all(|&v| v == 0.0));
            assert!(p1.bias(&stack.out_b).iter().all(|&v| v == 0.0));
        }

        // empirical weight variance close to 2/fan_in on a big layer
        let big = NetworkSpec {
            input_dims: InputDims {
                nt_rec: 100,
                nd: 50,
                ns: 2,
            },
            hidden_width: 16,
            ..tiny_spec()
        };
        let p = seeded_params(&big, 2);
        let w = p.matrix(&p.layout.encoder.in_w);
        let n = w.len() as f64;
        let var = w.iter().map(|v| v * v).sum::<f64>() / n;
        let expect = 2.0 / big.input_dims.flat() as f64;
        assert!(
            (var / expect - 1.0).abs() < 0.2,
            "variance {var} vs {expect}"
        );
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let spec = tiny_spec();
        let p = seeded_params(&spec, 3);
        let g: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let (rec, pred) = forward(&p, &spec, &g).unwrap();
        assert_eq!(rec.len(), 12);
        assert_eq!(pred.len(), 4);
        let (rec2, pred2) = forward(&p, &spec, &g).unwrap();
        assert_eq!(rec, rec2);
        assert_eq!(pred, pred2);
    }

    #[test]
    fn zeroed_blocks_are_identity() {
        let spec = tiny_spec();
        let mut p = seeded_params(&spec, 4);
        // zero every residual branch in the encoder; with the out affine set
        // to a slice of the identity the latent equals the in-affine output
        for (w1, b1, w2, b2) in p.layout.encoder.blocks.clone() {
            for slot in [w1, b1, w2, b2] {
                for v in p.data[slot.offset..slot.offset + slot.len()].iter_mut() {
                    *v = 0.0;
                }
            }
        }
        let g: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let x = ArrayView2::from_shape((1, 12), &g).unwrap();
        let (after_in, _) =
            // reproduce the in-affine alone by a forward pass through a
            // block-free layout of the same weights
            {
                let h = affine(
                    &x,
                    &p.matrix(&p.layout.encoder.in_w),
                    p.bias(&p.layout.encoder.in_b),
                );
                (h, ())
            };
        let (latent, _) = stack_forward(&p, &p.layout.encoder, &spec.activation, x);
        let manual = affine(
            &after_in.view(),
            &p.matrix(&p.layout.encoder.out_w),
            p.bias(&p.layout.encoder.out_b),
        );
        for (a, b) in latent.iter().zip(manual.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn loss_zero_for_perfect_heads() {
        // single-sample batch, hand-computed case: rec == x and pred == t
        let spec = tiny_spec();
        let p = seeded_params(&spec, 5);
        let g: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let (rec, pred) = forward(&p, &spec, &g).unwrap();
        let x = Array2::from_shape_vec((1, 12), rec).unwrap();
        // use the network's own reconstruction as the input: not a perfect
        // autoencoder, so instead check the analytic pieces directly
        let t = Array2::from_shape_vec((1, 4), pred.clone()).unwrap();
        let mu = vec![1.0; 4];
        // with targets equal to predictions the l2 term vanishes
        let xg = Array2::from_shape_vec((1, 12), g.clone()).unwrap();
        let loss = loss_weighted(&p, &spec, &xg, &t, &mu).unwrap();
        let (rec2, _) = forward(&p, &spec, &g).unwrap();
        let l1_expect: f64 = rec2
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 12.0;
        assert_abs_diff_eq!(loss, l1_expect, epsilon = 1e-12);
        let _ = x;
    }

    #[test]
    fn doubling_mu_quadruples_l2_term() {
        let spec = tiny_spec();
        let p = seeded_params(&spec, 6);
        let xg = Array2::from_shape_vec((2, 12), (0..24).map(|i| (i as f64).sin()).collect())
            .unwrap();
        let t = Array2::from_shape_vec((2, 4), (0..8).map(|i| i as f64 * 0.2).collect()).unwrap();
        let mu1 = vec![0.7; 4];
        let mu2 = vec![1.4; 4];
        let l_a = loss_weighted(&p, &spec, &xg, &t, &mu1).unwrap();
        let l_b = loss_weighted(&p, &spec, &xg, &t, &mu2).unwrap();
        let l_zero = loss_weighted(&p, &spec, &xg, &t, &[0.0; 4]).unwrap();
        // l_zero is the pure l1 part
        assert_abs_diff_eq!(l_b - l_zero, 4.0 * (l_a - l_zero), epsilon = 1e-10);
    }

    #[test]
    fn hand_computed_single_sample_loss() {
        let spec = tiny_spec();
        let p = seeded_params(&spec, 7);
        let g: Vec<f64> = (0..12).map(|i| 0.05 * i as f64).collect();
        let t: Vec<f64> = vec![0.3, -0.2, 0.1, 0.4];
        let mu = vec![1.0, 0.5, 2.0, 0.25];
        let (rec, pred) = forward(&p, &spec, &g).unwrap();
        let mut expect = rec.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum::<f64>() / 12.0;
        for f in 0..4 {
            let e = mu[f] * (t[f] - pred[f]);
            expect += 0.5 * e * e;
        }
        let xg = Array2::from_shape_vec((1, 12), g).unwrap();
        let tg = Array2::from_shape_vec((1, 4), t).unwrap();
        let loss = loss_weighted(&p, &spec, &xg, &tg, &mu).unwrap();
        assert_abs_diff_eq!(loss, expect, epsilon = 1e-12);
    }

    #[test]
    fn grad_params_matches_finite_differences() {
        let spec = tiny_spec();
        let mut p = seeded_params(&spec, 8);
        let b = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let xg = Array2::from_shape_fn((b, 12), |_| rng.gen_range(-1.0..1.0));
        let tg = Array2::from_shape_fn((b, 4), |_| rng.gen_range(-1.0..1.0));
        let mu = vec![1.0, 0.5, 0.8, 1.2];
        let (_, grad) = loss_and_grad(&p, &spec, &xg, &tg, &mu).unwrap();
        let eps = 1e-6;
        let mut checked = 0;
        let total = p.layout.total;
        let stride = (total / 60).max(1);
        for idx in (0..total).step_by(stride) {
            let orig = p.data[idx];
            p.data[idx] = orig + eps;
            let lp = loss_weighted(&p, &spec, &xg, &tg, &mu).unwrap();
            p.data[idx] = orig - eps;
            let lm = loss_weighted(&p, &spec, &xg, &tg, &mu).unwrap();
            p.data[idx] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let scale = fd.abs().max(grad[idx].abs()).max(1e-8);
            assert!(
                ((fd - grad[idx]) / scale).abs() < 1e-5,
                "param {idx}: fd {fd} vs grad {}",
                grad[idx]
            );
            checked += 1;
        }
        assert!(checked > 40);
    }

    #[test]
    fn grad_linear_over_batches() {
        let spec = tiny_spec();
        let p = seeded_params(&spec, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xa = Array2::from_shape_fn((2, 12), |_| rng.gen_range(-1.0..1.0));
        let ta = Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0));
        let xb = Array2::from_shape_fn((3, 12), |_| rng.gen_range(-1.0..1.0));
        let tb = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let mu = vec![1.0; 4];
        let (la, ga) = loss_and_grad(&p, &spec, &xa, &ta, &mu).unwrap();
        let (lb, gb) = loss_and_grad(&p, &spec, &xb, &tb, &mu).unwrap();
        let mut xall = Array2::zeros((5, 12));
        xall.slice_mut(ndarray::s![0..2, ..]).assign(&xa);
        xall.slice_mut(ndarray::s![2..5, ..]).assign(&xb);
        let mut tall = Array2::zeros((5, 4));
        tall.slice_mut(ndarray::s![0..2, ..]).assign(&ta);
        tall.slice_mut(ndarray::s![2..5, ..]).assign(&tb);
        let (lc, gc) = loss_and_grad(&p, &spec, &xall, &tall, &mu).unwrap();
        assert_abs_diff_eq!(lc, (2.0 * la + 3.0 * lb) / 5.0, epsilon = 1e-12);
        for i in (0..gc.len()).step_by(37) {
            assert_abs_diff_eq!(
                gc[i],
                (2.0 * ga[i] + 3.0 * gb[i]) / 5.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let spec = tiny_spec();
        let p = seeded_params(&spec, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vjp = vjp_input(&p, &spec, &g, &c).unwrap();
        let eps = 1e-6;
        for j in 0..12 {
            let mut gp = g.clone();
            let mut gm = g.clone();
            gp[j] += eps;
            gm[j] -= eps;
            let pp = predict(&p, &spec, &gp).unwrap();
            let pm = predict(&p, &spec, &gm).unwrap();
            let fd: f64 = pp
                .iter()
                .zip(&pm)
                .zip(&c)
                .map(|((a, b), cv)| cv * (a - b) / (2.0 * eps))
                .sum();
            let scale = fd.abs().max(vjp[j].abs()).max(1e-8);
            assert!(
                ((fd - vjp[j]) / scale).abs() < 1e-4,
                "input {j}: fd {fd} vs vjp {}",
                vjp[j]
            );
        }
        // zero cotangent gives the zero vector; vjp is linear in c
        let z = vjp_input(&p, &spec, &g, &[0.0; 4]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let c2: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        let v2 = vjp_input(&p, &spec, &g, &c2).unwrap();
        for (a, b) in vjp.iter().zip(&v2) {
            assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_invariant_under_sample_order() {
        let spec = tiny_spec();
        let p = seeded_params(&spec, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = Array2::from_shape_fn((4, 12), |_| rng.gen_range(-1.0..1.0));
        let t = Array2::from_shape_fn((4, 4), |_| rng.gen_range(-1.0..1.0));
        let mu = vec![1.0; 4];
        let l1 = loss_weighted(&p, &spec, &x, &t, &mu).unwrap();
        let perm = [3usize, 1, 0, 2];
        let xp = Array2::from_shape_fn((4, 12), |(r, c)| x[[perm[r], c]]);
        let tp = Array2::from_shape_fn((4, 4), |(r, c)| t[[perm[r], c]]);
        let l2 = loss_weighted(&p, &spec, &xp, &tp, &mu).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-12);
    }
}
