//! Decision trees and random forests trained with an uneven-split
//! regularized Gini criterion, plus the tooling around them: expected-depth
//! analysis, automatic tuning of the regularization weight, cache-aware node
//! layout, C inference-kernel generation and a benchmark harness.

pub mod analytics;
pub mod bench;
pub mod codegen;
pub mod criterion;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod layout;
pub mod synthgen;
pub mod trainer;
pub mod tree;
pub mod tuner;

pub use error::{Error, Result};
