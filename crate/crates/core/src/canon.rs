//! Per-task answer canonicalization for label comparison and vote counting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Folio,
    Raco,
    Tso,
    /// Desk-scale shuffled-objects task; canonicalized like `Tso`.
    #[serde(rename = "synth", alias = "synthetic")]
    Synthetic,
}

impl TaskId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::Folio => "folio",
            TaskId::Raco => "raco",
            TaskId::Tso => "tso",
            TaskId::Synthetic => "synth",
        }
    }

    pub fn canonicalize(&self, raw: &str) -> String {
        match self {
            TaskId::Folio => canon_folio(raw),
            TaskId::Raco => canon_raco(raw),
            TaskId::Tso | TaskId::Synthetic => canon_tso(raw),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task id `{0}` (expected folio, raco, tso or synth)")]
pub struct UnknownTask(pub String);

impl FromStr for TaskId {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "folio" => Ok(TaskId::Folio),
            "raco" => Ok(TaskId::Raco),
            "tso" => Ok(TaskId::Tso),
            "synth" | "synthetic" => Ok(TaskId::Synthetic),
            other => Err(UnknownTask(other.to_string())),
        }
    }
}

/// Last word of the response, lowercased, with surrounding punctuation removed.
pub fn canon_folio(raw: &str) -> String {
    let trimmed = raw.trim_end_matches(|c: char| !c.is_alphanumeric());
    trimmed
        .split_whitespace()
        .last()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Spelled-out numbers recognised by [`canon_raco`], indexed by value.
pub const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

fn raco_tokens(lower: &str) -> impl Iterator<Item = &str> {
    lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

fn first_digit_run(lower: &str) -> Option<&str> {
    let start = lower.find(|c: char| c.is_ascii_digit())?;
    let rest = &lower[start..];
    let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    Some(&rest[..end])
}

fn raco_token(raw: &str, map_words: bool) -> String {
    let lower = raw.to_lowercase();
    if let Some(digits) = first_digit_run(&lower) {
        return digits.to_string();
    }
    if let Some((value, word)) = raco_tokens(&lower).find_map(|w| {
        NUMBER_WORDS.iter().position(|n| *n == w).map(|v| (v, w))
    }) {
        return if map_words { value.to_string() } else { word.to_string() };
    }
    let first = raco_tokens(&lower).next().unwrap_or("").to_string();
    first
}

/// First digit string, else first spelled-out number (mapped to digits), else first word.
pub fn canon_raco(raw: &str) -> String {
    raco_token(raw, true)
}

/// Phrases removed from shuffled-objects answers, in application order.
/// The first entry also swallows the single word that follows it.
pub const TSO_REMOVALS: [&str; 7] = [
    "at the end of the",
    "has",
    "is playing",
    "is dancing with",
    "the",
    "ball",
    "present",
];

/// Lowercase, drop punctuation, then delete the [`TSO_REMOVALS`] phrases as
/// whole-token sequences, in order, until nothing changes.
pub fn canon_tso(raw: &str) -> String {
    let cleaned: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut tokens: Vec<&str> = cleaned.split_whitespace().collect();
    let phrases: Vec<Vec<&str>> = TSO_REMOVALS.iter().map(|p| p.split(' ').collect()).collect();

    loop {
        let before = tokens.len();
        for (pi, phrase) in phrases.iter().enumerate() {
            let swallow_next = pi == 0;
            let mut out = Vec::with_capacity(tokens.len());
            let mut i = 0;
            while i < tokens.len() {
                if tokens[i..].starts_with(phrase) {
                    i += phrase.len();
                    if swallow_next && i < tokens.len() {
                        i += 1;
                    }
                } else {
                    out.push(tokens[i]);
                    i += 1;
                }
            }
            tokens = out;
        }
        if tokens.len() == before {
            break;
        }
    }
    tokens.join(" ")
}

/// Canonical-form equality between a model answer and a gold label.
///
/// For RACO the unmapped spelled-out form of the answer is also compared
/// against the canonical gold, so a gold label kept as a number word still
/// matches when the dataset was not normalized.
pub fn answers_match(task: TaskId, raw_answer: &str, gold: &str) -> bool {
    let gold_c = task.canonicalize(gold);
    if task.canonicalize(raw_answer) == gold_c {
        return true;
    }
    task == TaskId::Raco && raco_token(raw_answer, false) == gold_c
}

/// [`answers_match`] keyed by a task id string.
pub fn answers_match_str(task: &str, raw_answer: &str, gold: &str) -> Result<bool, UnknownTask> {
    Ok(answers_match(task.parse()?, raw_answer, gold))
}
