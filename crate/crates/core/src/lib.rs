//! Reasoning-graph prompt compiler and evaluation toolkit.
//!
//! The crate models few-shot reasoning exemplars as explicit reasoning
//! graphs (`graph`), renders them into Standard / chain-of-thought /
//! residual-connection prompt text (`compile`), loads benchmark question
//! sets (`ingest`), calls a text-completion endpoint with caching and
//! retries (`client`), parses completions into typed answers (`extract`),
//! scores runs (`metrics`), and ships an offline synthetic oracle that
//! tests whether restating prerequisites recovers solvability for a
//! window-limited reasoner (`oracle`).

pub mod answer;
pub mod client;
pub mod compile;
pub mod exemplars;
pub mod extract;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod oracle;

pub use answer::Answer;
pub use compile::{NoiseKind, NoiseSpec, Ordering, Placement, PromptConfig, RefStyle, Strategy};
pub use graph::{PrereqRef, ReasoningGraph, ReasoningStep};
