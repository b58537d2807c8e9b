//! Synthetic anomaly generation for N-dimensional images.
//!
//! The crate covers the whole data side of training anomaly localisers from
//! synthetic tasks: mask placement, Poisson blending through a DST-I solver,
//! radial deformations, smooth intensity changes, continuous labels,
//! task/fold cross-validation plans and AP/AUROC evaluation. The
//! `synthanom` binary wires these into a file-based batch pipeline.

pub mod config;
pub mod crossval;
pub mod distance;
pub mod dst;
pub mod error;
pub mod interp;
pub mod io;
pub mod labelling;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod poisson;
pub mod preview;
pub mod rng;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use mask::{AnomalyMask, MaskKind, MaskSpec};
pub use rng::RngStream;
pub use tasks::TaskKind;
pub use tensor::{BoundingBox, Tensor};
