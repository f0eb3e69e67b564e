//! Dense numeric core: matrices, two-layer ReLU MLPs, reverse-mode
//! differentiation over matrix-valued nodes, and Adam.

mod adam;
mod matrix;
mod mlp;
mod tape;

pub use adam::{adam_step, AdamState};
pub use matrix::{axpy, dot, linear, matmul, squared_distance, Matrix};
pub use mlp::{mlp_forward, MlpParams, MlpVars};
pub use tape::{softmax_in_place, Gradients, Tape, Var};
