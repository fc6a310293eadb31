//! Measuring how bias in in-context examples carries over into
//! LLM-generated tabular data, and how to attack and defend that channel.

pub mod data;
pub mod downstream;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod generate;
pub mod mitigation;
pub mod prompt;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
