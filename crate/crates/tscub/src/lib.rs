//! Cross-dataset skeleton-based action recognition via temporal and spatial
//! permutation pretext tasks.

pub mod error;
pub mod autodiff;
pub mod backbone;
pub mod cubism;
pub mod data;
pub mod fusion;
pub mod pipeline;
pub mod selftest;
pub mod skeleton;
pub mod trainer;

pub use error::{Error, Result};
