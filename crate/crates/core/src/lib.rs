//! Multi-agent reasoning with exemplar memory.
//!
//! The crate covers the full experiment loop: rendering prompts for each
//! reasoning style, calling models through a counted [`gateway::Gateway`],
//! building and querying exemplar [`memory`] banks, running agent
//! [`orchestrate`]ion with vote or summarizer aggregation, and the
//! [`runner`] that enumerates method combinations, repeats runs and checks
//! the observed call counts against the closed-form compute model.

pub mod canon;
pub mod combo;
pub mod config;
pub mod gateway;
pub mod memory;
pub mod orchestrate;
pub mod prompting;
pub mod runner;
pub mod seed;
pub mod tasks;
pub mod types;

pub use canon::{answers_match, TaskId};
pub use combo::{validate_combo, Aggregation, AgentTopology, MemoryMode, MethodCombo, ReasoningStyle, Violation};
pub use seed::seed_stream;
pub use types::{DecodingParams, Exemplar, Provenance, Split, TaskExample};
