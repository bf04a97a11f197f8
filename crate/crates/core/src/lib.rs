//! In-context sampling for LLM classification.
//!
//! Demonstration candidates are sampled from the training data with a
//! similarity-based (or random) strategy, each test datum gets a committee of
//! prompts built from disjoint demonstration sets, and the committee's parsed
//! answers are majority-voted. The [`harness`] module runs whole benchmark
//! grids on top of the building blocks.

pub mod augment;
pub mod datasets;
pub mod embedding;
pub mod harness;
#[cfg(feature = "native")]
pub mod http;
pub mod id;
pub mod llm;
pub mod prompt;
pub mod seed;
pub mod strategies;
pub mod voting;

pub use datasets::{Datum, DatumContent, TaskKind};
pub use id::DatumId;
pub use prompt::{Demonstration, PromptInput, TaskTemplate};
pub use strategies::StrategyKind;

/// Crate version recorded in run manifests.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
