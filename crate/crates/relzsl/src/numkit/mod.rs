//! Dense linear-algebra kernel, activation functions, seeded RNG and the Adam
//! optimizer that the rest of the crate builds on.
//!
//! Everything here is `f64`, row-major, and pure: kernel operations never
//! mutate their inputs, so they are safe to call concurrently. `AdamState`
//! and `Rng` are the only stateful types and are owned by a single training
//! loop at a time.

mod activation;
mod adam;
mod matrix;
mod rng;
mod standardize;
mod vec_ops;

pub use activation::{elu, elu_grad, relu, relu_grad};
pub use adam::AdamState;
pub use matrix::Matrix;
pub use rng::Rng;
pub use standardize::{standardize_apply, standardize_fit, ColumnStats};
pub use vec_ops::{dot, l2_norm, squared_distance};
