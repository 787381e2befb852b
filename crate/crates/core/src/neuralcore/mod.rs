//! Tensors, a small reverse-mode tape and the layers the networks are built
//! from: convolution, partial convolution, AdaIN, linear and residual blocks.
//! Also the parameter container, Adam and a finite-difference gradient check.

mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{finite_diff_gradcheck, finite_diff_gradcheck_at, DEFAULT_GRADCHECK_STEP};
pub use graph::{Gradients, Graph, Var};
pub use layers::{
    adain, adain_tensor, partial_conv2d, Conv, Linear, PartialConvState, Residual, ResidualDown, INSTANCE_NORM_EPS,
    LEAKY_SLOPE,
};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;
