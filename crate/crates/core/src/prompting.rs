//! Prompt rendering and answer extraction.
//!
//! Two-call protocols (zero-shot CoT, few-shot CoT, summarizer) continue one
//! transcript: the second prompt is the first prompt, a single space, the
//! trimmed first completion, a newline and the answer cue
//! `Therefore, the answer is ` (with one trailing space). A finished zero-shot
//! transcript therefore has exactly the layout of a few-shot exemplar block.

use crate::combo::ReasoningStyle;
use crate::gateway::CallTag;
use crate::types::Exemplar;

pub const THINK_CUE: &str = "A: Let's think step by step.";
pub const ANSWER_CUE: &str = "Therefore, the answer is ";
pub const DIRECT_CUE: &str = "A: The answer is ";

const AP_INSTRUCTIONS_HEAD: &str = "Your task is to tackle reasoning problems. When presented with a \n\
problem, recall relevant problems as examples. Afterward, proceed \n\
to solve the initial problem.\n\
\n\
# Initial Problem:\n";

const AP_INSTRUCTIONS_TAIL: &str = "\n\
\n\
# Instructions:\n\
Make sure to include all of the following points:\n\
\n\
## Relevant Problems:\n\
Recall three examples of problems that are relevant to the initial \n\
problem. Note that your problems must be distinct from each other \n\
and from the initial problem. For each problem:\n\
- After \"Q: \", describe the problem\n\
- After \"A: \", explain the solution and enclose the ultimate \n\
answer in \\boxed{}.\n\
\n\
## Solve the Initial Problem:\n\
Say \"Let's solve the following reasoning problem.\" Then formulate \n\
your response in the following format:\n\
Q: Copy and paste the initial problem here.\n\
A: Explain the solution and enclose the ultimate answer in\n\
\\boxed{} here.";

const SUMMARIZER_HEAD: &str = "Q: We have several solution candidates for the question below. \n\
Please discuss and summarize these solution candidates and output \n\
your best answer. ";

/// Header opening the self-generated exemplar section of an analogical completion.
pub const RELEVANT_PROBLEMS_HEADER: &str = "## Relevant Problems";
/// Header closing it.
pub const SOLVE_HEADER: &str = "## Solve the Initial Problem";

/// Which protocol produced a set of completions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Direct,
    Zcot,
    Ncot,
    Ap,
    ApMemory,
    Summarizer,
}

impl From<ReasoningStyle> for PromptKind {
    fn from(style: ReasoningStyle) -> Self {
        match style {
            ReasoningStyle::Direct => PromptKind::Direct,
            ReasoningStyle::Zcot => PromptKind::Zcot,
            ReasoningStyle::Ncot => PromptKind::Ncot,
            ReasoningStyle::Ap => PromptKind::Ap,
            ReasoningStyle::ApMemory => PromptKind::ApMemory,
        }
    }
}

impl PromptKind {
    pub fn stage_count(&self) -> usize {
        match self {
            PromptKind::Direct | PromptKind::Ap | PromptKind::ApMemory => 1,
            PromptKind::Zcot | PromptKind::Ncot | PromptKind::Summarizer => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub text: String,
    pub tag: CallTag,
    /// Stage text is appended to the previous stage's transcript.
    pub continues_previous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagedPrompt {
    pub kind: PromptKind,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("exemplar {0} has an empty chain of thought")]
    EmptyThoughts(String),
    #[error("summarizer needs at least one candidate")]
    NoCandidates,
    #[error("stage {stage} needs {needed} earlier completions, got {got}")]
    MissingCompletion { stage: usize, needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("{kind:?} expects {expected} completions, got {got}")]
    StageCount {
        kind: PromptKind,
        expected: usize,
        got: usize,
    },
    #[error("no \\boxed{{}} answer in completion")]
    NoBoxedAnswer,
}

impl StagedPrompt {
    fn single(kind: PromptKind, text: String, tag: CallTag) -> Self {
        Self {
            kind,
            stages: vec![Stage {
                text,
                tag,
                continues_previous: false,
            }],
        }
    }

    fn two_stage(kind: PromptKind, first: String, reason: CallTag, answer: CallTag) -> Self {
        Self {
            kind,
            stages: vec![
                Stage {
                    text: first,
                    tag: reason,
                    continues_previous: false,
                },
                Stage {
                    text: format!("\n{ANSWER_CUE}"),
                    tag: answer,
                    continues_previous: true,
                },
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Full prompt text for `stage`, given the completions of all earlier stages.
    pub fn prompt_for(&self, stage: usize, completions: &[String]) -> Result<String, PromptError> {
        if completions.len() < stage {
            return Err(PromptError::MissingCompletion {
                stage,
                needed: stage,
                got: completions.len(),
            });
        }
        let s = &self.stages[stage];
        if !s.continues_previous || stage == 0 {
            return Ok(s.text.clone());
        }
        let mut prev = self.prompt_for(stage - 1, completions)?;
        prev.push(' ');
        prev.push_str(completions[stage - 1].trim());
        prev.push_str(&s.text);
        Ok(prev)
    }

    /// Prompt plus every completion: the transcript as the model saw it.
    pub fn transcript(&self, completions: &[String]) -> Result<String, PromptError> {
        let last = self.stages.len() - 1;
        let mut out = self.prompt_for(last, completions)?;
        if let Some(c) = completions.get(last) {
            out.push_str(c.trim());
        }
        Ok(out)
    }
}

fn check_question(question: &str) -> Result<(), PromptError> {
    if question.trim().is_empty() {
        Err(PromptError::EmptyQuestion)
    } else {
        Ok(())
    }
}

fn question_block(question: &str) -> String {
    format!("Q: {question}\n{THINK_CUE}")
}

pub fn render_direct(question: &str) -> Result<StagedPrompt, PromptError> {
    check_question(question)?;
    Ok(StagedPrompt::single(
        PromptKind::Direct,
        format!("Q: {question}\n{DIRECT_CUE}"),
        CallTag::DirectCall,
    ))
}

pub fn render_zcot(question: &str) -> Result<StagedPrompt, PromptError> {
    check_question(question)?;
    Ok(StagedPrompt::two_stage(
        PromptKind::Zcot,
        question_block(question),
        CallTag::ReasonCall,
        CallTag::AnswerCall,
    ))
}

/// Few-shot CoT; with no exemplars the output is byte-identical to [`render_zcot`].
pub fn render_ncot(exemplars: &[&Exemplar], question: &str) -> Result<StagedPrompt, PromptError> {
    check_question(question)?;
    let mut text = String::new();
    for ex in exemplars {
        if ex.chain_of_thought.trim().is_empty() {
            return Err(PromptError::EmptyThoughts(ex.id.clone()));
        }
        text.push_str(&format!(
            "Q: {}\n{THINK_CUE} {}\n{ANSWER_CUE}{}\n\n",
            ex.question, ex.chain_of_thought, ex.answer
        ));
    }
    text.push_str(&question_block(question));
    let kind = if exemplars.is_empty() {
        PromptKind::Zcot
    } else {
        PromptKind::Ncot
    };
    Ok(StagedPrompt::two_stage(kind, text, CallTag::ReasonCall, CallTag::AnswerCall))
}

/// Analogical prompt, optionally followed by stored self-generated exemplars.
pub fn render_ap(question: &str, memory: Option<&[&Exemplar]>) -> Result<StagedPrompt, PromptError> {
    check_question(question)?;
    let mut text = format!("{AP_INSTRUCTIONS_HEAD}{question}{AP_INSTRUCTIONS_TAIL}");
    let memory = memory.unwrap_or(&[]);
    for ex in memory {
        text.push_str("\n\n");
        text.push_str(&ex.self_generated_text());
    }
    let kind = if memory.is_empty() {
        PromptKind::Ap
    } else {
        PromptKind::ApMemory
    };
    Ok(StagedPrompt::single(kind, text, CallTag::ApCall))
}

pub fn render_summarizer<S: AsRef<str>>(question: &str, candidates: &[S]) -> Result<StagedPrompt, PromptError> {
    check_question(question)?;
    if candidates.is_empty() {
        return Err(PromptError::NoCandidates);
    }
    let mut text = format!("{SUMMARIZER_HEAD}{question}\n");
    for (i, c) in candidates.iter().enumerate() {
        text.push_str(&format!("Solution {}: {}\n", i + 1, c.as_ref()));
    }
    text.push_str(THINK_CUE);
    Ok(StagedPrompt::two_stage(
        PromptKind::Summarizer,
        text,
        CallTag::SummarizerReason,
        CallTag::SummarizerAnswer,
    ))
}

/// Pull the raw answer out of a protocol's completions.
///
/// Direct: the trimmed completion. Two-call protocols: the trimmed second
/// completion. Analogical: the contents of the last top-level balanced
/// `\boxed{...}` group.
pub fn extract_answer<S: AsRef<str>>(kind: PromptKind, completions: &[S]) -> Result<String, ExtractError> {
    let expected = kind.stage_count();
    if completions.len() != expected {
        return Err(ExtractError::StageCount {
            kind,
            expected,
            got: completions.len(),
        });
    }
    match kind {
        PromptKind::Direct => Ok(completions[0].as_ref().trim().to_string()),
        PromptKind::Zcot | PromptKind::Ncot | PromptKind::Summarizer => {
            Ok(completions[1].as_ref().trim().to_string())
        }
        PromptKind::Ap | PromptKind::ApMemory => last_boxed(completions[0].as_ref())
            .map(|s| s.trim().to_string())
            .ok_or(ExtractError::NoBoxedAnswer),
    }
}

/// Contents of the last top-level `\boxed{...}` group whose braces balance.
pub fn last_boxed(text: &str) -> Option<&str> {
    const OPEN: &str = "\\boxed{";
    let bytes = text.as_bytes();
    let mut found = None;
    let mut pos = 0;
    while let Some(off) = text[pos..].find(OPEN) {
        let start = pos + off + OPEN.len();
        let mut depth = 1usize;
        let mut end = None;
        for (i, b) in bytes[start..].iter().enumerate() {
            match b {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(start + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(e) => {
                found = Some(&text[start..e]);
                pos = e + 1;
            }
            None => pos = start,
        }
    }
    found
}

/// One self-generated exemplar parsed from an analogical completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedProblem {
    /// Verbatim `Q: ... A: ...` block.
    pub text: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RelevantProblemsError {
    #[error("completion has no relevant-problems section")]
    MissingSection,
    #[error("relevant-problems section holds no `Q:` blocks")]
    NoProblems,
    #[error("relevant problem {0} has no `A:` line")]
    MissingAnswer(usize),
}

/// Split the relevant-problems section of an analogical completion into its
/// `Q:`/`A:` blocks, in order. The section runs from the first
/// `## Relevant Problems` header to the `## Solve the Initial Problem` header
/// (or the end of the text).
pub fn parse_relevant_problems(completion: &str) -> Result<Vec<GeneratedProblem>, RelevantProblemsError> {
    let start = completion
        .find(RELEVANT_PROBLEMS_HEADER)
        .ok_or(RelevantProblemsError::MissingSection)?;
    let after_header = &completion[start..];
    let body_start = after_header.find('\n').map_or(after_header.len(), |i| i + 1);
    let body = &after_header[body_start..];
    let body = match body.find(SOLVE_HEADER) {
        Some(end) => &body[..end],
        None => body,
    };

    let mut blocks: Vec<Vec<&str>> = Vec::new();
    for line in body.lines() {
        if line.trim_start().starts_with("Q:") {
            blocks.push(vec![line]);
        } else if let Some(block) = blocks.last_mut() {
            block.push(line);
        }
    }
    if blocks.is_empty() {
        return Err(RelevantProblemsError::NoProblems);
    }

    blocks
        .into_iter()
        .enumerate()
        .map(|(i, lines)| {
            let text = lines.join("\n").trim().to_string();
            let a_line = lines
                .iter()
                .position(|l| l.trim_start().starts_with("A:"))
                .ok_or(RelevantProblemsError::MissingAnswer(i + 1))?;
            let question = lines[..a_line]
                .join("\n")
                .trim_start()
                .trim_start_matches("Q:")
                .trim()
                .to_string();
            let answer = last_boxed(&text).unwrap_or("").trim().to_string();
            Ok(GeneratedProblem { text, question, answer })
        })
        .collect()
}
