//! Jellyfish-bloom sonar event classification.
//!
//! Synthetic sonar events, a per-frame CNN classifier, conditional-GAN
//! training-set enhancement, confidence-sequence event fusion with
//! class-weighted loss, jellyfish confidence gating, multi-run evaluation
//! and a latency benchmark.

pub mod benchkit;
pub mod csv;
pub mod error;
pub mod evalkit;
pub mod eventfuse;
pub mod framecls;
pub mod ganaug;
pub mod gate;
pub mod nnkit;
pub mod pipeline;
pub mod rng;
pub mod sonargen;
pub mod split;
pub mod types;

pub use error::{Error, Result};
pub use rng::{seeded_rng, SeedStream};
pub use split::{split_dataset, split_indices, Split};
pub use types::*;
