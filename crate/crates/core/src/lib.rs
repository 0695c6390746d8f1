//! Fusion of two same-architecture feed-forward networks by layer-wise
//! optimal-transport weight alignment.
//!
//! * [`tensor`]: dense `f64` matrices and row distance matrices.
//! * [`ot`]: exact (assignment), entropic (Sinkhorn) and brute-force
//!   transport between uniform distributions.
//! * [`model`]: feed-forward classifiers, SGD, synthetic data, checkpoints.
//! * [`fusion`]: alignment, averaging and the align → average → fine-tune
//!   pipeline.
//! * [`eval`]: error rates, hypothesis selection, logit ensembles and loss
//!   landscapes.
//! * [`experiment`]: the direct-vs-aligned averaging ablation.
//! * [`cli`]: the `otfuse` command line.

pub mod cli;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod model;
pub mod ot;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Matrix;
