//! Method combinations and the rules deciding which of them are legal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::memory::RetrievalMode;

/// Default number of reasoning agents for multi-agent collaboration.
pub const DEFAULT_AGENTS: usize = 10;
/// Default number of exemplars (shots) per agent.
pub const DEFAULT_SHOTS: usize = 3;
/// Default number of repeated runs per combination.
pub const DEFAULT_RUNS: usize = 6;

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ParseEnumError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(ParseEnumError {
                        kind: stringify!($name),
                        value: other.to_string(),
                    }),
                }
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseEnumError {
    pub kind: &'static str,
    pub value: String,
}

string_enum!(
    /// Prompting protocol each reasoning agent follows.
    ReasoningStyle {
        Direct => "direct",
        Zcot => "zcot",
        Ncot => "ncot",
        Ap => "ap",
        ApMemory => "ap_memory",
    }
);

string_enum!(
    /// How reasoning agents are arranged.
    AgentTopology {
        Greedy => "greedy",
        Sc => "sc",
        Varied => "varied",
    }
);

string_enum!(
    /// Memory bank kind paired with a retrieval mechanism.
    MemoryMode {
        None => "none",
        FrozenFixed => "frozen_fixed",
        FrozenRandom => "frozen_random",
        LearnedRandom => "learned_random",
        LearnedSimilar => "learned_similar",
    }
);

string_enum!(
    Aggregation {
        Vote => "vote",
        Summarizer => "summarizer",
    }
);

impl ReasoningStyle {
    /// Number of generation calls one agent spends per question.
    pub fn calls_per_agent(&self) -> u64 {
        match self {
            ReasoningStyle::Direct | ReasoningStyle::Ap | ReasoningStyle::ApMemory => 1,
            ReasoningStyle::Zcot | ReasoningStyle::Ncot => 2,
        }
    }

    /// Whether the style yields a chain of thought distinct from its final answer.
    pub fn produces_thoughts(&self) -> bool {
        !matches!(self, ReasoningStyle::Direct)
    }
}

impl MemoryMode {
    pub fn retrieval(&self) -> Option<RetrievalMode> {
        match self {
            MemoryMode::None => None,
            MemoryMode::FrozenFixed => Some(RetrievalMode::Fixed),
            MemoryMode::FrozenRandom | MemoryMode::LearnedRandom => Some(RetrievalMode::Random),
            MemoryMode::LearnedSimilar => Some(RetrievalMode::Similar),
        }
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self, MemoryMode::FrozenFixed | MemoryMode::FrozenRandom)
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, MemoryMode::LearnedRandom | MemoryMode::LearnedSimilar)
    }
}

/// One point in the experiment space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodCombo {
    pub style: ReasoningStyle,
    pub agents: AgentTopology,
    /// Number of reasoning agents.
    pub m: usize,
    /// Shots per agent.
    pub k: usize,
    pub memory: MemoryMode,
    pub aggregation: Aggregation,
}

impl MethodCombo {
    pub fn new(
        style: ReasoningStyle,
        agents: AgentTopology,
        m: usize,
        k: usize,
        memory: MemoryMode,
        aggregation: Aggregation,
    ) -> Self {
        Self {
            style,
            agents,
            m,
            k,
            memory,
            aggregation,
        }
    }

    pub fn uses_memory(&self) -> bool {
        self.memory != MemoryMode::None
    }

    pub fn is_valid(&self) -> bool {
        validate_combo(self).is_empty()
    }

    /// Compact `style,agents,m,k,memory,aggregation` form used by the CLI.
    pub fn to_spec_string(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.style, self.agents, self.m, self.k, self.memory, self.aggregation
        )
    }
}

impl fmt::Display for MethodCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_spec_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComboParseError {
    #[error("expected 6 comma-separated fields (style,agents,m,k,memory,aggregation), got {0}")]
    FieldCount(usize),
    #[error(transparent)]
    Enum(#[from] ParseEnumError),
    #[error("invalid integer `{0}`")]
    Integer(String),
}

impl FromStr for MethodCombo {
    type Err = ComboParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(ComboParseError::FieldCount(parts.len()));
        }
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| ComboParseError::Integer(v.to_string()))
        };
        Ok(MethodCombo {
            style: parts[0].parse()?,
            agents: parts[1].parse()?,
            m: int(parts[2])?,
            k: int(parts[3])?,
            memory: parts[4].parse()?,
            aggregation: parts[5].parse()?,
        })
    }
}

/// A broken combination rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    /// direct, zcot and plain ap do not draw exemplars from memory.
    StyleForbidsMemory(ReasoningStyle),
    NcotRequiresMemory,
    ApMemoryRequiresLearned,
    VariedRequiresRandom,
    GreedyRequiresSingleAgent,
    NoAgents,
    MemoryRequiresShots,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StyleForbidsMemory(style) => write!(f, "{style} requires memory=none"),
            Violation::NcotRequiresMemory => f.write_str("ncot requires a memory bank"),
            Violation::ApMemoryRequiresLearned => {
                f.write_str("ap_memory requires memory=learned_random or learned_similar")
            }
            Violation::VariedRequiresRandom => f.write_str("varied requires random retrieval"),
            Violation::GreedyRequiresSingleAgent => f.write_str("greedy requires M=1"),
            Violation::NoAgents => f.write_str("M must be positive"),
            Violation::MemoryRequiresShots => f.write_str("memory retrieval requires K >= 1"),
        }
    }
}

/// Every rule `combo` breaks. An empty list means the combination is legal.
pub fn validate_combo(combo: &MethodCombo) -> Vec<Violation> {
    let mut out = Vec::new();

    match combo.style {
        ReasoningStyle::Direct | ReasoningStyle::Zcot | ReasoningStyle::Ap => {
            if combo.uses_memory() {
                out.push(Violation::StyleForbidsMemory(combo.style));
            }
        }
        ReasoningStyle::Ncot => {
            if !combo.uses_memory() {
                out.push(Violation::NcotRequiresMemory);
            }
        }
        ReasoningStyle::ApMemory => {
            if !combo.memory.is_learned() {
                out.push(Violation::ApMemoryRequiresLearned);
            }
        }
    }

    if combo.agents == AgentTopology::Varied
        && combo.memory.retrieval() != Some(RetrievalMode::Random)
    {
        out.push(Violation::VariedRequiresRandom);
    }

    if combo.m == 0 {
        out.push(Violation::NoAgents);
    } else if combo.agents == AgentTopology::Greedy && combo.m != 1 {
        out.push(Violation::GreedyRequiresSingleAgent);
    }

    if combo.uses_memory() && combo.k == 0 {
        out.push(Violation::MemoryRequiresShots);
    }

    out
}
