//! Deterministic prompt → response lookup used as a test oracle.
//!
//! Rules are matched with this precedence:
//!
//! 1. `exact`: the whole prompt equals the pattern;
//! 2. `suffix`: the prompt ends with the pattern, longest pattern first;
//! 3. `substring`: the prompt contains the pattern, longest pattern first.
//!
//! A rule may be restricted to one agent index. At equal kind and pattern
//! length an agent-specific rule beats a generic one. Two rules with the same
//! kind, pattern and agent are rejected at construction; two *different*
//! substring patterns of equal length that both match one prompt cannot be
//! detected up front and are reported as an ambiguity error at lookup time.
//! Unmatched prompts return the fallback text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationRequest, TextBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    Exact,
    Suffix,
    Substring,
}

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub matcher_kind: MatcherKind,
    pub pattern: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
}

impl ScriptRule {
    pub fn exact(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self::new(MatcherKind::Exact, pattern, response)
    }

    pub fn suffix(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self::new(MatcherKind::Suffix, pattern, response)
    }

    pub fn substring(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self::new(MatcherKind::Substring, pattern, response)
    }

    pub fn new(kind: MatcherKind, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher_kind: kind,
            pattern: pattern.into(),
            response: response.into(),
            agent: None,
        }
    }

    pub fn for_agent(mut self, agent: usize) -> Self {
        self.agent = Some(agent);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("ambiguous script: duplicate {kind:?} rule for pattern {pattern:?}")]
    DuplicateRule { kind: MatcherKind, pattern: String },
    #[error("ambiguous script: substring patterns {first:?} and {second:?} both match")]
    AmbiguousMatch { first: String, second: String },
    #[error("script rule with empty pattern")]
    EmptyPattern,
    #[error("script line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("script io: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    fallback: String,
    rules: Vec<ScriptRule>,
    exact: HashMap<String, Vec<usize>>,
    /// pattern length → pattern → rule indices; iterated longest first
    suffix: BTreeMap<usize, HashMap<String, Vec<usize>>>,
    /// rule indices sorted by descending pattern length
    substring: Vec<usize>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>, fallback: impl Into<String>) -> Result<Self, ScriptError> {
        let mut seen = HashSet::new();
        let mut exact: HashMap<String, Vec<usize>> = HashMap::new();
        let mut suffix: BTreeMap<usize, HashMap<String, Vec<usize>>> = BTreeMap::new();
        let mut substring = Vec::new();
        for (i, rule) in rules.iter().enumerate() {
            if rule.pattern.is_empty() {
                return Err(ScriptError::EmptyPattern);
            }
            if !seen.insert((rule.matcher_kind, rule.pattern.as_str(), rule.agent)) {
                return Err(ScriptError::DuplicateRule {
                    kind: rule.matcher_kind,
                    pattern: rule.pattern.clone(),
                });
            }
            match rule.matcher_kind {
                MatcherKind::Exact => exact.entry(rule.pattern.clone()).or_default().push(i),
                MatcherKind::Suffix => suffix
                    .entry(rule.pattern.len())
                    .or_default()
                    .entry(rule.pattern.clone())
                    .or_default()
                    .push(i),
                MatcherKind::Substring => substring.push(i),
            }
        }
        substring.sort_by_key(|&i| std::cmp::Reverse(rules[i].pattern.len()));
        Ok(Self {
            name: "scripted".into(),
            fallback: fallback.into(),
            rules,
            exact,
            suffix,
            substring,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    /// Load rules from JSONL, one `{matcher_kind, pattern, response[, agent]}` object per line.
    pub fn from_jsonl(path: &Path, fallback: impl Into<String>) -> Result<Self, ScriptError> {
        let file = fs::File::open(path).map_err(|e| ScriptError::Io(format!("{}: {e}", path.display())))?;
        let mut rules = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ScriptError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rule = serde_json::from_str(&line).map_err(|e| ScriptError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            rules.push(rule);
        }
        let name = path
            .file_stem()
            .map(|s| format!("scripted:{}", s.to_string_lossy()))
            .unwrap_or_else(|| "scripted".into());
        Ok(Self::new(rules, fallback)?.with_name(name))
    }

    pub fn write_jsonl(rules: &[ScriptRule], path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for rule in rules {
            serde_json::to_writer(&mut out, rule)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Pick the best of several rules sharing one pattern: agent-specific over generic.
    fn pick<'a>(&'a self, candidates: &[usize], agent: Option<usize>) -> Option<&'a ScriptRule> {
        let mut generic = None;
        for &i in candidates {
            let rule = &self.rules[i];
            match rule.agent {
                Some(a) if Some(a) == agent => return Some(rule),
                None => generic = Some(rule),
                Some(_) => {}
            }
        }
        generic
    }

    pub fn lookup(&self, prompt: &str, agent: Option<usize>) -> Result<&str, ScriptError> {
        if let Some(rule) = self.exact.get(prompt).and_then(|c| self.pick(c, agent)) {
            return Ok(&rule.response);
        }

        for (&len, patterns) in self.suffix.iter().rev() {
            if len > prompt.len() || !prompt.is_char_boundary(prompt.len() - len) {
                continue;
            }
            let tail = &prompt[prompt.len() - len..];
            if let Some(rule) = patterns.get(tail).and_then(|c| self.pick(c, agent)) {
                return Ok(&rule.response);
            }
        }

        let mut best: Option<&ScriptRule> = None;
        for &i in &self.substring {
            let rule = &self.rules[i];
            if let Some(b) = best {
                if rule.pattern.len() < b.pattern.len() {
                    break;
                }
            }
            let applies = rule.agent.is_none() || rule.agent == agent;
            if !applies || !prompt.contains(rule.pattern.as_str()) {
                continue;
            }
            match best {
                None => best = Some(rule),
                Some(b) if b.pattern == rule.pattern => {
                    if rule.agent.is_some() {
                        best = Some(rule);
                    }
                }
                Some(b) => {
                    return Err(ScriptError::AmbiguousMatch {
                        first: b.pattern.clone(),
                        second: rule.pattern.clone(),
                    })
                }
            }
        }
        Ok(best.map_or(self.fallback.as_str(), |r| r.response.as_str()))
    }
}

impl TextBackend for ScriptedBackend {
    fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        Ok(self.lookup(&req.prompt, req.agent_index)?.to_string())
    }

    fn model_name(&self) -> String {
        self.name.clone()
    }
}
