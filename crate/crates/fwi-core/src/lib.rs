//! Full waveform inversion at desk scale: a finite-difference acoustic wave
//! solver with its exact discrete adjoint, parametric velocity models, dataset
//! synthesis, a small self-contained neural network stack for learning
//! approximate inverse operators, and the online reconstruction machinery
//! (truncated Neumann series, adjoint-state gradients, BFGS).
//!
//! The offline stage trains an encoder/decoder/predictor network mapping
//! receiver traces to velocity features under a frequency-weighted loss. The
//! online stage uses the trained map as a nonlinear preconditioner: either by
//! iterating the truncated Neumann series `m <- m0 + m - inv(f(m))`, or by
//! minimizing a preconditioned least-squares objective with adjoint-state
//! gradients.

pub mod analysis;
pub mod datagen;
pub mod error;
pub mod inversion;
pub mod nn;
pub mod velocity;
pub mod wave;

pub use error::{FwiError, Result};
pub use velocity::MeshField;
pub use wave::{DataBundle, GridSpec, ReceiverSide, ShotRecord, SourceProfile};
