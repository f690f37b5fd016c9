//! Training-free triplet tuning for sketch-conditioned cross-attention.
//!
//! Three modulations act on a cross-attention layer stack:
//!
//! - **prompt balance** swaps instance keyword embeddings for their standalone
//!   encodings and rescales them to the end-of-text token's energy;
//! - **dense tuning** pulls instance-token attention logits toward the column
//!   maximum inside the instance's sketch and toward the minimum outside it;
//! - **characteristics prominence** finds, per value channel, the TopK tokens by
//!   magnitude and amplifies the feature map inside the sketches of the
//!   instance tokens among them.
//!
//! The [`pipeline`] module drives a small deterministic layer stack over a
//! timestep schedule and reports per-instance feature responses.

pub mod attention;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod prompt;
pub mod sketch;
pub mod viz;

pub use error::{Error, ErrorClass, Result};

use prompt::InstanceId;

/// Non-fatal conditions surfaced alongside a result.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "kind", content = "instance", rename_all = "snake_case")]
pub enum Warning {
    NoKeywords,
    EmptyInstance(InstanceId),
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::NoKeywords => write!(f, "no instance keywords found in prompt"),
            Warning::EmptyInstance(id) => write!(f, "instance {id} has an empty sketch"),
        }
    }
}
