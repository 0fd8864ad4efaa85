//! Domain records shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

/// Dataset split an example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

/// One dataset item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExample {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub split: Split,
}

impl TaskExample {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        gold_answer: impl Into<String>,
        split: Split,
    ) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            gold_answer: gold_answer.into(),
            split,
        }
    }

    /// Question and gold answer must both carry text.
    pub fn is_well_formed(&self) -> bool {
        !self.id.is_empty() && !self.question.trim().is_empty() && !self.gold_answer.trim().is_empty()
    }
}

/// Where a memory record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    FrozenZcot,
    LearnedNcot,
    LearnedAp,
}

/// A memory record used as an in-context exemplar.
///
/// For `LearnedAp` records `chain_of_thought` holds the verbatim
/// self-generated `Q: ... A: ...` block, which is re-inserted into
/// analogical prompts unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub question: String,
    pub chain_of_thought: String,
    pub answer: String,
    pub embedding: Option<Vec<f64>>,
    pub provenance: Provenance,
    pub source_example_id: Option<String>,
    pub created_seq: u64,
}

impl Exemplar {
    /// Text inserted after an analogical prompt when the exemplar is used as memory.
    pub fn self_generated_text(&self) -> String {
        match self.provenance {
            Provenance::LearnedAp => self.chain_of_thought.clone(),
            Provenance::FrozenZcot | Provenance::LearnedNcot => format!(
                "Q: {}\nA: {}\n\\boxed{{{}}}",
                self.question, self.chain_of_thought, self.answer
            ),
        }
    }
}

/// Sampling temperature used by SC agents and by identical-context agents feeding a summarizer.
pub const SAMPLING_TEMPERATURE: f64 = 0.7;

/// Default cap on completion length; the source experiments do not state one.
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl DecodingParams {
    pub fn greedy(max_tokens: u32) -> Self {
        Self {
            temperature: 0.0,
            max_tokens,
            seed: None,
        }
    }

    pub fn sampled(max_tokens: u32, seed: u64) -> Self {
        Self {
            temperature: SAMPLING_TEMPERATURE,
            max_tokens,
            seed: Some(seed),
        }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }
}
