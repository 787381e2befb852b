//! Context-aware redrawing of image regions.
//!
//! The crate is organised bottom-up:
//!
//! * [`imagemath`]: color spaces, low-pass filtering, color transfer,
//!   Poisson cloning, resampling and PNG I/O.
//! * [`neuralcore`]: tensors, a reverse-mode tape, network building blocks
//!   (partial convolution, AdaIN), parameter stores and gradient checking.
//! * [`styleenc`]: the style-aware design encoder, triplet training,
//!   UPGMA clustering and the separation-ratio metric.
//! * [`translator`]: the redrawer, the quality/context discriminators,
//!   their losses and the adversarial training loop.
//! * [`datasetgen`]: manifests, level-of-detail split, crops, samplers and
//!   a procedural corpus with ground truth.
//! * [`pipeline`]: run configuration and the command implementations used
//!   by the `redraw` binary.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod datasetgen;
mod dual;
mod error;
pub mod imagemath;
pub mod neuralcore;
pub mod pipeline;
mod scalar;
pub mod styleenc;
pub mod translator;

pub use dual::Dual;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Image = imagemath::RasterImage<f64>;
pub type Mask = imagemath::RegionMask<f64>;
pub type Tensor64 = neuralcore::Tensor<f64>;
pub type Params64 = neuralcore::ParamStore<f64>;
