//! Minimal neural-network kit: sequential networks with hand-written
//! backpropagation, softmax and weighted cross-entropy, Adam, finite
//! difference checking and a model file format.
//!
//! Parameters are stored as `f32`. All arithmetic runs on a 64-bit working
//! copy, so reductions accumulate in `f64`.

pub mod adam;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{load_model, save_model};
pub use layers::{Act, Layer};
pub use loss::{backward, softmax, softmax_confidence, weighted_cross_entropy, LossWeights};
pub use network::{Model, Network, Trace};
pub use tensor::{ModelParams, Tensor};
