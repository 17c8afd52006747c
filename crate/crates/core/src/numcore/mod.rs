//! Dense `f64` tensors, a reverse-mode tape, losses, sampling and Adam.

mod adam;
mod composite;
mod functional;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use composite::{gumbel_softmax, mean_of, nll_of_index, soft_cross_entropy};
pub use functional::{
    affine, cross_entropy, gumbel_noise, gumbel_softmax_sample, gumbel_softmax_with_noise, kl_divergence, log_softmax,
    softmax,
};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub use params::{ParamBuilder, ParamSet, FORMAT_VERSION, MAGIC};
pub use tensor::{argmax, Tensor};
