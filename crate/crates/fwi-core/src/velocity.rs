//! Parametric velocity models, random sampling, the feature map between
//! parameter vectors and mesh fields, rescaling, and spectral projection.
//!
//! Two parametric families are supported: cosine expansions in the
//! Laplace-Neumann eigenbasis of the rectangle, and superpositions of
//! Gaussian bumps over a constant background. Both can be evaluated onto
//! the solver mesh; cosine fields can also be projected back exactly.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::wave::GridSpec;

/// A scalar field sampled on the (K+1) x (K+1) solver mesh.
///
/// Row index is the depth level (row 0 is the top surface z = 0, row K the
/// bottom z = -H), column index runs along x.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshField {
    pub values: Array2<f64>,
}

impl MeshField {
    pub fn zeros(n: usize) -> Self {
        MeshField {
            values: Array2::zeros((n, n)),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        MeshField {
            values: Array2::from_elem((n, n), c),
        }
    }

    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(FwiError::invalid(format!(
                "mesh field must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(MeshField { values })
    }

    /// Nodes per side (K+1).
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, a: f64) -> MeshField {
        MeshField {
            values: &self.values * a,
        }
    }

    pub fn add(&self, other: &MeshField) -> MeshField {
        MeshField {
            values: &self.values + &other.values,
        }
    }

    pub fn sub(&self, other: &MeshField) -> MeshField {
        MeshField {
            values: &self.values - &other.values,
        }
    }

    /// `self + a * other`, in place.
    pub fn add_scaled(&mut self, a: f64, other: &MeshField) {
        self.values.zip_mut_with(&other.values, |s, &o| *s += a * o);
    }

    /// Clamp all node values into `[lo, hi]`; returns how many were clamped.
    pub fn clamp_range(&mut self, lo: f64, hi: f64) -> usize {
        let mut hits = 0;
        for v in self.values.iter_mut() {
            if *v < lo {
                *v = lo;
                hits += 1;
            } else if *v > hi {
                *v = hi;
                hits += 1;
            }
        }
        hits
    }
}

/// Coefficient matrix of a cosine expansion; entry `[kx, kz]` multiplies
/// `cos(kx pi x / L) cos(kz pi z / H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoeffs {
    pub coeffs: Array2<f64>,
}

impl FourierCoeffs {
    pub fn zeros(modes: usize) -> Self {
        FourierCoeffs {
            coeffs: Array2::zeros((modes, modes)),
        }
    }

    pub fn modes(&self) -> usize {
        self.coeffs.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub amplitude: f64,
    /// Center (x0, z0) with z0 in [-H, 0].
    pub center: [f64; 2],
    /// Covariance as a symmetric positive definite 2x2 matrix.
    pub cov: [[f64; 2]; 2],
}

impl GaussianComponent {
    pub fn isotropic(amplitude: f64, x0: f64, z0: f64, variance: f64) -> Self {
        GaussianComponent {
            amplitude,
            center: [x0, z0],
            cov: [[variance, 0.0], [0.0, variance]],
        }
    }
}

/// Superposition of Gaussian bumps over a constant background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub background: f64,
    pub components: Vec<GaussianComponent>,
}

/// Cosine-basis tables for a square mesh: `table[k, i] = cos(pi k i / K)`.
fn cos_table(modes: usize, k_cells: usize) -> Array2<f64> {
    let mut t = Array2::zeros((modes, k_cells + 1));
    for k in 0..modes {
        for i in 0..=k_cells {
            t[[k, i]] = (std::f64::consts::PI * k as f64 * i as f64 / k_cells as f64).cos();
        }
    }
    t
}

/// Evaluate a cosine expansion on the mesh nodes of `grid`.
pub fn eval_fourier(c: &FourierCoeffs, grid: &GridSpec) -> MeshField {
    let k = grid.cells_per_side;
    let m = c.modes();
    let cx = cos_table(m, k); // (M, K+1) over x index
    let cz = cos_table(m, k); // (M, K+1) over depth level; cos is even so the sign of z drops
    // field[l, i] = sum_{kx,kz} c[kx,kz] cz[kz,l] cx[kx,i]
    let field = cz.t().dot(&c.coeffs.t()).dot(&cx);
    MeshField { values: field }
}

/// Evaluate a Gaussian mixture on the mesh nodes of `grid`.
pub fn eval_gaussian(gm: &GaussianMixture, grid: &GridSpec) -> Result<MeshField> {
    let n = grid.nodes_per_side();
    let mut field = Array2::from_elem((n, n), gm.background);
    for comp in &gm.components {
        let [[a, b], [b2, d]] = comp.cov;
        if (b - b2).abs() > 1e-12 * (1.0 + b.abs()) {
            return Err(FwiError::invalid("covariance matrix is not symmetric"));
        }
        let det = a * d - b * b2;
        if !(det > 1e-300) || a <= 0.0 {
            return Err(FwiError::invalid("covariance matrix is singular"));
        }
        // inverse of [[a, b], [b, d]]
        let (ia, ib, id) = (d / det, -b / det, a / det);
        for l in 0..n {
            let z = grid.z_at(l);
            for i in 0..n {
                let x = grid.x_at(i);
                let dx = x - comp.center[0];
                let dz = z - comp.center[1];
                let q = ia * dx * dx + 2.0 * ib * dx * dz + id * dz * dz;
                field[[l, i]] += comp.amplitude * (-0.5 * q).exp();
            }
        }
    }
    Ok(MeshField { values: field })
}

/// Draw an `M x M` coefficient matrix with entries uniform on [-0.5, 0.5],
/// damped by `[(kx+1)(kz+1)]^(-alpha)`.
pub fn sample_fourier<R: Rng>(modes: usize, alpha: f64, rng: &mut R) -> FourierCoeffs {
    let mut c = Array2::zeros((modes, modes));
    for kx in 0..modes {
        for kz in 0..modes {
            let raw: f64 = rng.gen_range(-0.5..0.5);
            let damp = (((kx + 1) * (kz + 1)) as f64).powf(-alpha);
            c[[kx, kz]] = raw * damp;
        }
    }
    FourierCoeffs { coeffs: c }
}

/// Draw a Gaussian mixture: amplitudes uniform on [0, 5], centers uniform in
/// the domain, isotropic variance uniform on [0.1, 0.3], background 10.
pub fn sample_gaussian<R: Rng>(
    components: usize,
    length_x: f64,
    depth_z: f64,
    rng: &mut R,
) -> GaussianMixture {
    let comps = (0..components)
        .map(|_| {
            let c: f64 = rng.gen_range(0.0..5.0);
            let x0: f64 = rng.gen_range(0.0..length_x);
            let z0: f64 = rng.gen_range(-depth_z..0.0);
            let s: f64 = rng.gen_range(0.0..0.2) + 0.1;
            GaussianComponent::isotropic(c, x0, z0, s)
        })
        .collect();
    GaussianMixture {
        background: 10.0,
        components: comps,
    }
}

/// Affine map sending `min(f) -> lo` and `max(f) -> hi` exactly.
pub fn rescale(f: &MeshField, lo: f64, hi: f64) -> Result<MeshField> {
    if !(hi > lo) {
        return Err(FwiError::invalid("rescale target range must satisfy hi > lo"));
    }
    let (fmin, fmax) = (f.min(), f.max());
    if fmax <= fmin {
        return Err(FwiError::DegenerateRange);
    }
    let a = (hi - lo) / (fmax - fmin);
    let out = f.values.mapv(|v| lo + (v - fmin) * a);
    Ok(MeshField { values: out })
}

/// Trapezoid weights `[1/2, 1, ..., 1, 1/2]` used by the discrete cosine
/// projection; with these, the nodal cosine basis is exactly orthogonal.
fn trapezoid_weights(n: usize) -> Array1<f64> {
    let mut w = Array1::ones(n);
    w[0] = 0.5;
    w[n - 1] = 0.5;
    w
}

/// Project a mesh field onto the first `M x M` cosine modes.
///
/// Exact left-inverse of [`eval_fourier`] for `M <= K`.
pub fn project_fourier(f: &MeshField, modes: usize, grid: &GridSpec) -> Result<FourierCoeffs> {
    let k = grid.cells_per_side;
    if modes > k {
        return Err(FwiError::invalid(format!(
            "requested {modes} modes on a {k}-cell grid"
        )));
    }
    let n = k + 1;
    if f.n() != n {
        return Err(FwiError::invalid("field does not match grid"));
    }
    let w = trapezoid_weights(n);
    // weighted field fw[l, i] = w_l w_i f[l, i]
    let mut fw = f.values.clone();
    for l in 0..n {
        for i in 0..n {
            fw[[l, i]] *= w[l] * w[i];
        }
    }
    let cx = cos_table(modes, k);
    let cz = cos_table(modes, k);
    // raw[kz, kx] = sum_{l,i} fw[l,i] cz[kz,l] cx[kx,i]
    let raw = cz.dot(&fw).dot(&cx.t());
    let norm = |a: usize| -> f64 {
        if a == 0 {
            k as f64
        } else {
            k as f64 / 2.0
        }
    };
    let mut coeffs = Array2::zeros((modes, modes));
    for kx in 0..modes {
        for kz in 0..modes {
            coeffs[[kx, kz]] = raw[[kz, kx]] / (norm(kx) * norm(kz));
        }
    }
    Ok(FourierCoeffs { coeffs })
}

/// Transpose of [`eval_fourier`] viewed as a linear map from coefficients to
/// node values: `out[kx,kz] = sum_nodes y[l,i] cos(kx pi x_i) cos(kz pi z_l)`.
pub fn eval_fourier_transpose(y: &MeshField, modes: usize, grid: &GridSpec) -> FourierCoeffs {
    let k = grid.cells_per_side;
    let cx = cos_table(modes, k);
    let cz = cos_table(modes, k);
    let raw = cz.dot(&y.values).dot(&cx.t());
    let mut coeffs = Array2::zeros((modes, modes));
    for kx in 0..modes {
        for kz in 0..modes {
            coeffs[[kx, kz]] = raw[[kz, kx]];
        }
    }
    FourierCoeffs { coeffs }
}

/// How velocity fields are encoded as flat feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// `modes x modes` cosine coefficients, row-major in (kx, kz).
    Fourier { modes: usize },
    /// `(amplitude, x0, z0, variance)` per component over a fixed background.
    Gaussian { components: usize, background: f64 },
    /// Raw node values, row-major.
    Mesh { nodes_per_side: usize },
}

impl FeatureKind {
    pub fn dim(&self) -> usize {
        match self {
            FeatureKind::Fourier { modes } => modes * modes,
            FeatureKind::Gaussian { components, .. } => 4 * components,
            FeatureKind::Mesh { nodes_per_side } => nodes_per_side * nodes_per_side,
        }
    }
}

/// Feature map descriptor: the encoding plus the per-coordinate weight
/// vector used by the training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    #[serde(flatten)]
    pub kind: FeatureKind,
    pub mu: Vec<f64>,
}

impl FeatureSpec {
    /// Build a spec with the default weight vector for the kind: for cosine
    /// features `mu(k) = [(kx+1)(kz+1)]^(-1/2)` (max-normalized to 1, which
    /// the (0,0) entry already achieves), all ones otherwise.
    pub fn with_default_mu(kind: FeatureKind) -> Self {
        let mu = match &kind {
            FeatureKind::Fourier { modes } => {
                let mut mu = Vec::with_capacity(modes * modes);
                for kx in 0..*modes {
                    for kz in 0..*modes {
                        mu.push((((kx + 1) * (kz + 1)) as f64).powf(-0.5));
                    }
                }
                mu
            }
            other => vec![1.0; other.dim()],
        };
        FeatureSpec { kind, mu }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.dim() {
            return Err(FwiError::invalid(format!(
                "weight vector has {} entries, feature space has {}",
                self.mu.len(),
                self.dim()
            )));
        }
        if self.mu.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(FwiError::invalid("weight vector entries must be finite and >= 0"));
        }
        Ok(())
    }

    /// Decode a feature vector into a mesh field on `grid`.
    pub fn decode(&self, features: &[f64], grid: &GridSpec) -> Result<MeshField> {
        if features.len() != self.dim() {
            return Err(FwiError::invalid("feature vector has wrong length"));
        }
        match &self.kind {
            FeatureKind::Fourier { modes } => {
                let coeffs =
                    Array2::from_shape_vec((*modes, *modes), features.to_vec()).unwrap();
                Ok(eval_fourier(&FourierCoeffs { coeffs }, grid))
            }
            FeatureKind::Gaussian { components, background } => {
                let comps = (0..*components)
                    .map(|c| {
                        let f = &features[4 * c..4 * c + 4];
                        GaussianComponent::isotropic(f[0], f[1], f[2], f[3].max(1e-6))
                    })
                    .collect();
                eval_gaussian(
                    &GaussianMixture {
                        background: *background,
                        components: comps,
                    },
                    grid,
                )
            }
            FeatureKind::Mesh { nodes_per_side } => {
                let n = *nodes_per_side;
                if n != grid.nodes_per_side() {
                    return Err(FwiError::invalid("mesh feature size does not match grid"));
                }
                Ok(MeshField {
                    values: Array2::from_shape_vec((n, n), features.to_vec()).unwrap(),
                })
            }
        }
    }

    /// Pull a mesh-space cotangent back through [`FeatureSpec::decode`]:
    /// returns `J^T y` where `J` is the Jacobian of decode at `features`.
    pub fn decode_vjp(
        &self,
        features: &[f64],
        cotangent: &MeshField,
        grid: &GridSpec,
    ) -> Result<Vec<f64>> {
        if features.len() != self.dim() {
            return Err(FwiError::invalid("feature vector has wrong length"));
        }
        match &self.kind {
            FeatureKind::Fourier { modes } => {
                let t = eval_fourier_transpose(cotangent, *modes, grid);
                Ok(t.coeffs.iter().copied().collect())
            }
            FeatureKind::Gaussian { components, .. } => {
                let n = grid.nodes_per_side();
                let mut out = vec![0.0; 4 * components];
                for c in 0..*components {
                    let f = &features[4 * c..4 * c + 4];
                    let (amp, x0, z0, s) = (f[0], f[1], f[2], f[3].max(1e-6));
                    let mut acc = [0.0; 4];
                    for l in 0..n {
                        let z = grid.z_at(l);
                        for i in 0..n {
                            let x = grid.x_at(i);
                            let (dx, dz) = (x - x0, z - z0);
                            let r2 = dx * dx + dz * dz;
                            let g = (-0.5 * r2 / s).exp();
                            let y = cotangent.values[[l, i]];
                            acc[0] += y * g;
                            acc[1] += y * amp * g * dx / s;
                            acc[2] += y * amp * g * dz / s;
                            acc[3] += y * amp * g * r2 / (2.0 * s * s);
                        }
                    }
                    out[4 * c..4 * c + 4].copy_from_slice(&acc);
                }
                Ok(out)
            }
            FeatureKind::Mesh { .. } => Ok(cotangent.values.iter().copied().collect()),
        }
    }
}

/// Flatten a coefficient matrix in the feature-vector layout (row-major kx).
pub fn fourier_features(c: &FourierCoeffs) -> Vec<f64> {
    c.coeffs.iter().copied().collect()
}

/// Feature vector of an isotropic Gaussian mixture: `(c, x0, z0, s)` per
/// component, components ordered by x-center so the encoding is a function
/// of the field rather than of the draw order. Errors if any component is
/// anisotropic or has off-diagonal covariance.
pub fn gaussian_features(gm: &GaussianMixture) -> Result<Vec<f64>> {
    let mut comps: Vec<&GaussianComponent> = gm.components.iter().collect();
    comps.sort_by(|a, b| a.center[0].partial_cmp(&b.center[0]).unwrap());
    let mut out = Vec::with_capacity(4 * comps.len());
    for comp in comps {
        let [[a, b], [b2, d]] = comp.cov;
        if b.abs() > 1e-12 || b2.abs() > 1e-12 || (a - d).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(FwiError::invalid(
                "gaussian features require isotropic diagonal covariance",
            ));
        }
        out.extend_from_slice(&[comp.amplitude, comp.center[0], comp.center[1], a]);
    }
    Ok(out)
}
