//! Counterfactual explanations for GCN node classification, rendered as
//! prompts for a language model and scored with exact-match metrics.

pub mod dataset;
pub mod error;
pub mod explain;
pub mod extract;
pub mod gcn;
pub mod graph;
pub mod llm;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod verbalize;

pub use error::{Error, Result};
