//! Point-cloud face embedding.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: spatial index, PCA normals, farthest point sampling (plain
//!   and nose-anchored dithering), ball query.
//! * [`morph`]: linear morphable face model, synthetic face generation,
//!   coefficient fitting, labeled dataset generation.
//! * [`nn`]: a small reverse-mode differentiation tape with the layers the
//!   network needs, Adam, and the checkpoint container.
//! * [`net`]: the four-layer set-abstraction network, training loop and
//!   checkpoint selection by verification loss.
//! * [`metrics`]: cosine identification, ROC/AUC, verification rate.
//! * [`io`]: point-cloud files, PLY import, manifests and run configuration.

pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod morph;
pub mod net;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
