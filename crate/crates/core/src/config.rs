//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canon::TaskId;
use crate::combo::{MethodCombo, DEFAULT_AGENTS, DEFAULT_RUNS, DEFAULT_SHOTS};
use crate::runner::Family;
use crate::tasks::SynthConfig;
use crate::types::DEFAULT_MAX_TOKENS;

/// Everything a `run` needs apart from the backend.
///
/// Every field has a default, so `{}` is a valid document:
///
/// ```json
/// {
///   "task": "synth",
///   "family": "main",
///   "combos": ["ncot,varied,10,3,learned_random,vote"],
///   "runs": 6,
///   "agents": 10,
///   "shots": 3,
///   "master_seed": 0,
///   "max_tokens": 1024,
///   "data": null,
///   "bank": null,
///   "embedding_dim": 64,
///   "record_traces": false,
///   "synth": {"n_train": 40, "n_validation": 20, "n_people": 3, "n_swaps": 3, "seed": 0}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskId,
    pub family: Option<Family>,
    /// Explicit combinations in `style,agents,m,k,memory,aggregation` form.
    pub combos: Vec<String>,
    pub runs: usize,
    /// Agents per multi-agent combination.
    pub agents: usize,
    /// Shots per agent for memory-using combinations.
    pub shots: usize,
    pub master_seed: u64,
    pub max_tokens: u32,
    /// Dataset location; unused for the synthetic task unless set.
    pub data: Option<PathBuf>,
    /// Prebuilt frozen bank; built on the fly when absent and needed.
    pub bank: Option<PathBuf>,
    /// Dimension of the built-in embedder used with scripted backends.
    pub embedding_dim: usize,
    pub record_traces: bool,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskId::Synthetic,
            family: None,
            combos: Vec::new(),
            runs: DEFAULT_RUNS,
            agents: DEFAULT_AGENTS,
            shots: DEFAULT_SHOTS,
            master_seed: 0,
            max_tokens: DEFAULT_MAX_TOKENS,
            data: None,
            bank: None,
            embedding_dim: 64,
            record_traces: false,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("combination `{text}`: {message}")]
    Combo { text: String, message: String },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Parse the explicit combinations.
    pub fn parsed_combos(&self) -> Result<Vec<MethodCombo>, ConfigError> {
        self.combos
            .iter()
            .map(|t| {
                t.parse().map_err(|e: crate::combo::ComboParseError| ConfigError::Combo {
                    text: t.clone(),
                    message: e.to_string(),
                })
            })
            .collect()
    }
}
