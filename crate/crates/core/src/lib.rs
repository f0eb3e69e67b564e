//! Reward learning from demonstrations abstracted into object graphs.
//!
//! Bounding boxes become per-object feature vectors ([`data`]), a spatial
//! interaction encoder embeds each frame ([`encoder`]), temporal
//! cycle-consistency aligns demonstrations in that embedding space
//! ([`tcc`]), and the distance to a goal embedding becomes a dense reward
//! ([`reward`]). A toy pushing/reaching environment ([`env`]) with scripted
//! experts and a cross-entropy-method policy search ([`policy`]) closes the
//! loop; [`evalkit`] measures alignment and reward quality.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod encoder;
pub mod env;
pub mod error;
pub mod evalkit;
pub mod numcore;
pub mod policy;
pub mod reward;
pub mod tcc;

pub use error::{Error, Result};
