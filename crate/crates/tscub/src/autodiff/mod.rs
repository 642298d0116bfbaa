//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! Double precision throughout. Two forward passes over identical inputs and
//! parameters produce bit-identical outputs: parallelism only ever splits
//! work into fixed-size chunks whose results are combined in a fixed order.

pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod params;
pub mod tensor;

pub use gradcheck::{check_gradients, compare_with_analytic, GradCheckReport};
pub use graph::{softmax_rows, Graph, NodeId};
pub use params::{
    checkpoint_from_bytes, checkpoint_to_bytes, he_normal, load_checkpoint, save_checkpoint,
    uniform_init, AdamConfig, ParamStore,
};
pub use tensor::Tensor;
