//! Simulated mixture generator and the chat-completions client.

mod anchor;
mod cells;
mod client;
mod component;
mod fit;
mod mixture;
mod parse;
mod prompt_model;
mod simulate;

pub use anchor::{fit_anchor, fit_anchor_split, AnchorModel, AnchorSpec, LabelRule, MarginalDist, MarginalSpec};
pub use cells::{CellIndex, PROTECTED_BINS};
pub use client::{
    extract_content, llm_generate, CallOutcome, ChatMessage, ChatRequest, EndpointConfig, GenerationLog,
    HttpTransport, LlmRun, LogEntry, ScriptedTransport, Transport, API_KEY_ENV,
};
pub use fit::silverman_bandwidth;
pub use mixture::{alpha_schedule, sample_mixture, MixtureGenerator, DEFAULT_TAU};
pub use parse::{parse_generation, ParseError, ParsedBatch, RowRejection};
pub use prompt_model::{phi_transform, phi_transform_split, PromptModel, LAPLACE_LAMBDA};
pub use simulate::{simulate_generation, RunShape, SimulatedRun};

