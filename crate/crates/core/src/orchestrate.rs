//! One example under one method combination: fan out agents, collect their
//! traces, aggregate by plurality vote or by a summarizer agent.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canon::{answers_match, TaskId};
use crate::combo::{Aggregation, AgentTopology, MethodCombo, ReasoningStyle};
use crate::gateway::{Gateway, GenerationRequest, Phase};
use crate::memory::{retrieve, MemoryBank, MemoryError, RetrievalMode, RetrievalSpec};
use crate::prompting::{extract_answer, render_ap, render_direct, render_ncot, render_summarizer, render_zcot, ExtractError, StagedPrompt};
use crate::seed::derive;
use crate::types::{DecodingParams, Exemplar, TaskExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub agent_index: usize,
    pub exemplar_ids: Vec<String>,
    /// Full prompt of every issued stage. Dropped from results unless traces are recorded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub completions: Vec<String>,
    pub raw_answer: String,
    pub canonical_answer: String,
    pub decoding: DecodingParams,
    /// Set when a call failed after retries; the trace is then excluded from aggregation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AgentTrace {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// What this trace contributes to a summarizer prompt.
    fn candidate(&self, style: ReasoningStyle) -> &str {
        match (style.produces_thoughts(), self.completions.first()) {
            (true, Some(c)) => c.trim(),
            _ => &self.raw_answer,
        }
    }

    /// Remove prompts and completions, keeping the answer-level record.
    pub fn strip_transcript(&mut self) {
        self.prompts.clear();
        self.completions.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub answer: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteResult {
    pub winner: String,
    /// Index in the input of the winner's first occurrence.
    pub first_index: usize,
    /// Distinct answers in order of first occurrence.
    pub tallies: Vec<Tally>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no answers to vote on")]
pub struct EmptyVote;

/// Most frequent answer; ties go to the answer that occurs first.
pub fn plurality_vote<S: AsRef<str>>(answers: &[S]) -> Result<VoteResult, EmptyVote> {
    let mut tallies: Vec<Tally> = Vec::new();
    let mut firsts: Vec<usize> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for (i, a) in answers.iter().enumerate() {
        let a = a.as_ref();
        match slot.get(a) {
            Some(&j) => tallies[j].count += 1,
            None => {
                slot.insert(a, tallies.len());
                tallies.push(Tally {
                    answer: a.to_string(),
                    count: 1,
                });
                firsts.push(i);
            }
        }
    }
    let best = tallies.iter().map(|t| t.count).max().ok_or(EmptyVote)?;
    let j = tallies.iter().position(|t| t.count == best).expect("max exists");
    Ok(VoteResult {
        winner: tallies[j].answer.clone(),
        first_index: firsts[j],
        tallies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationDetail {
    Vote {
        tallies: Vec<Tally>,
    },
    Summarizer {
        trace: AgentTrace,
        /// Present when the summarizer failed and a vote decided instead.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback_tallies: Option<Vec<Tally>>,
    },
    /// Every agent failed.
    NoAnswers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub example_id: String,
    pub traces: Vec<AgentTrace>,
    pub final_raw: String,
    pub final_canonical: String,
    pub correct: bool,
    pub failed: bool,
    pub aggregation: AggregationDetail,
}

impl ExampleOutcome {
    pub fn strip_transcripts(&mut self) {
        for t in &mut self.traces {
            t.strip_transcript();
        }
        if let AggregationDetail::Summarizer { trace, .. } = &mut self.aggregation {
            trace.strip_transcript();
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestrateError {
    #[error("combination {0} needs a memory bank")]
    MissingBank(MethodCombo),
    #[error("combination {combo} is invalid: {violations}")]
    InvalidCombo { combo: MethodCombo, violations: String },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// One agent's work order.
#[derive(Debug, Clone)]
pub struct AgentRun<'a> {
    pub style: ReasoningStyle,
    pub question: &'a str,
    pub exemplars: &'a [&'a Exemplar],
    pub params: DecodingParams,
    pub phase: Phase,
    pub agent_index: usize,
}

fn render_for(run: &AgentRun<'_>) -> Result<StagedPrompt, crate::prompting::PromptError> {
    match run.style {
        ReasoningStyle::Direct => render_direct(run.question),
        ReasoningStyle::Zcot => render_zcot(run.question),
        ReasoningStyle::Ncot => render_ncot(run.exemplars, run.question),
        ReasoningStyle::Ap => render_ap(run.question, None),
        ReasoningStyle::ApMemory => render_ap(run.question, Some(run.exemplars)),
    }
}

fn run_staged(
    gateway: &Gateway,
    prompt: &StagedPrompt,
    params: DecodingParams,
    phase: Phase,
    agent_index: Option<usize>,
    prompts: &mut Vec<String>,
    completions: &mut Vec<String>,
) -> Result<(), String> {
    for (i, stage) in prompt.stages.iter().enumerate() {
        let text = prompt.prompt_for(i, completions).map_err(|e| e.to_string())?;
        let mut req = GenerationRequest::new(text.clone(), params, stage.tag, phase);
        req.agent_index = agent_index;
        prompts.push(text);
        let out = gateway.generate(&req).map_err(|e| e.to_string())?;
        completions.push(out);
    }
    Ok(())
}

/// Run one reasoning agent to completion. Backend failures are recorded in the trace.
pub fn run_agent(gateway: &Gateway, task: TaskId, run: &AgentRun<'_>) -> AgentTrace {
    let mut trace = AgentTrace {
        agent_index: run.agent_index,
        exemplar_ids: run.exemplars.iter().map(|e| e.id.clone()).collect(),
        prompts: Vec::new(),
        completions: Vec::new(),
        raw_answer: String::new(),
        canonical_answer: String::new(),
        decoding: run.params,
        error: None,
    };
    let prompt = match render_for(run) {
        Ok(p) => p,
        Err(e) => {
            trace.error = Some(e.to_string());
            return trace;
        }
    };
    if let Err(e) = run_staged(
        gateway,
        &prompt,
        run.params,
        run.phase,
        Some(run.agent_index),
        &mut trace.prompts,
        &mut trace.completions,
    ) {
        log::warn!("agent {} failed: {e}", run.agent_index);
        trace.error = Some(e);
        return trace;
    }
    match extract_answer(prompt.kind, &trace.completions) {
        Ok(a) => trace.raw_answer = a,
        Err(ExtractError::NoBoxedAnswer) => log::debug!("agent {} gave no boxed answer", run.agent_index),
        Err(e) => trace.error = Some(e.to_string()),
    }
    trace.canonical_answer = task.canonicalize(&trace.raw_answer);
    trace
}

/// Exemplar lists for each of `m` agents.
///
/// Identical-context topologies share one draw per question; varied agents
/// draw independently. All seeds hang off `seed_base` and the example id.
pub(crate) fn plan_exemplars<'b>(
    bank: Option<&'b MemoryBank>,
    spec: Option<RetrievalSpec>,
    topology: AgentTopology,
    m: usize,
    example: &TaskExample,
    query_embedding: Option<&[f64]>,
    seed_base: u64,
) -> Result<Vec<Vec<&'b Exemplar>>, MemoryError> {
    let (Some(bank), Some(spec)) = (bank, spec) else {
        return Ok(vec![Vec::new(); m]);
    };
    let ex_label = format!("example:{}", example.id);
    if topology == AgentTopology::Varied {
        (0..m)
            .map(|a| {
                let seed = derive(seed_base, &[&ex_label, &format!("agent:{a}"), "retrieve"]);
                retrieve(bank, &spec, example, query_embedding, seed)
            })
            .collect()
    } else {
        let seed = derive(seed_base, &[&ex_label, "shared"]);
        let shared = retrieve(bank, &spec, example, query_embedding, seed)?;
        Ok(vec![shared; m])
    }
}

/// Decoding parameters of agent `a`: sampled for self-consistency, greedy otherwise.
pub(crate) fn decoding_for(
    topology: AgentTopology,
    max_tokens: u32,
    seed_base: u64,
    example: &TaskExample,
    agent: usize,
) -> DecodingParams {
    match topology {
        AgentTopology::Sc => DecodingParams::sampled(
            max_tokens,
            derive(seed_base, &[&format!("example:{}", example.id), &format!("agent:{agent}"), "sample"]),
        ),
        AgentTopology::Greedy | AgentTopology::Varied => DecodingParams::greedy(max_tokens),
    }
}

/// Seed from which the fixed exemplar set of a run is drawn.
pub fn fixed_exemplar_seed(run_seed: u64) -> u64 {
    derive(run_seed, &["fixed"])
}

/// Everything needed to evaluate validation examples under one combination.
#[derive(Clone, Copy)]
pub struct ExampleContext<'a> {
    pub combo: MethodCombo,
    pub task: TaskId,
    pub gateway: &'a Gateway,
    pub bank: Option<&'a MemoryBank>,
    pub run_seed: u64,
    pub max_tokens: u32,
}

impl<'a> ExampleContext<'a> {
    /// Fails fast on configuration problems, before any model call.
    pub fn check(&self) -> Result<(), OrchestrateError> {
        let violations = crate::combo::validate_combo(&self.combo);
        if !violations.is_empty() {
            return Err(OrchestrateError::InvalidCombo {
                combo: self.combo,
                violations: violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            });
        }
        if self.combo.uses_memory() && self.bank.is_none() {
            return Err(OrchestrateError::MissingBank(self.combo));
        }
        if self.combo.memory.retrieval() == Some(RetrievalMode::Similar) && !self.gateway.has_embedder() {
            return Err(MemoryError::Config("similar retrieval needs an embedding backend".into()).into());
        }
        Ok(())
    }

    fn retrieval_spec(&self) -> Option<RetrievalSpec> {
        let mode = self.combo.memory.retrieval()?;
        Some(RetrievalSpec {
            mode,
            k: self.combo.k,
            fixed_seed: (mode == RetrievalMode::Fixed).then(|| fixed_exemplar_seed(self.run_seed)),
        })
    }

    pub fn run_example(&self, example: &TaskExample) -> Result<ExampleOutcome, OrchestrateError> {
        self.check()?;
        let combo = &self.combo;
        let bank = if combo.uses_memory() { self.bank } else { None };

        let query_embedding = if combo.memory.retrieval() == Some(RetrievalMode::Similar) {
            match self.gateway.embed(&example.question) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("embedding query {} failed: {e}", example.id);
                    return Ok(failed_outcome(example, Vec::new()));
                }
            }
        } else {
            None
        };

        let plan = plan_exemplars(
            bank,
            self.retrieval_spec(),
            combo.agents,
            combo.m,
            example,
            query_embedding.as_deref(),
            self.run_seed,
        )?;

        let traces: Vec<AgentTrace> = plan
            .par_iter()
            .enumerate()
            .map(|(a, exemplars)| {
                let run = AgentRun {
                    style: combo.style,
                    question: &example.question,
                    exemplars,
                    params: decoding_for(combo.agents, self.max_tokens, self.run_seed, example, a),
                    phase: Phase::Validation,
                    agent_index: a,
                };
                run_agent(self.gateway, self.task, &run)
            })
            .collect();

        let ok: Vec<&AgentTrace> = traces.iter().filter(|t| !t.failed()).collect();
        if ok.is_empty() {
            return Ok(failed_outcome(example, traces));
        }

        let canon: Vec<&str> = ok.iter().map(|t| t.canonical_answer.as_str()).collect();
        let vote = plurality_vote(&canon).expect("non-empty");
        let vote_raw = ok[vote.first_index].raw_answer.clone();

        let (final_raw, aggregation) = match combo.aggregation {
            Aggregation::Vote => (vote_raw, AggregationDetail::Vote { tallies: vote.tallies }),
            Aggregation::Summarizer => {
                let trace = summarize(self.gateway, &example.question, combo.style, &ok, self.max_tokens, combo.m);
                if trace.failed() {
                    (
                        vote_raw,
                        AggregationDetail::Summarizer {
                            trace,
                            fallback_tallies: Some(vote.tallies),
                        },
                    )
                } else {
                    (
                        trace.raw_answer.clone(),
                        AggregationDetail::Summarizer {
                            trace,
                            fallback_tallies: None,
                        },
                    )
                }
            }
        };
        let final_canonical = self.task.canonicalize(&final_raw);
        Ok(ExampleOutcome {
            example_id: example.id.clone(),
            correct: answers_match(self.task, &final_raw, &example.gold_answer),
            traces,
            final_raw,
            final_canonical,
            failed: false,
            aggregation,
        })
    }
}

fn failed_outcome(example: &TaskExample, traces: Vec<AgentTrace>) -> ExampleOutcome {
    ExampleOutcome {
        example_id: example.id.clone(),
        traces,
        final_raw: String::new(),
        final_canonical: String::new(),
        correct: false,
        failed: true,
        aggregation: AggregationDetail::NoAnswers,
    }
}

/// Run the summarizer agent over successful traces; two greedy calls.
///
/// The returned trace carries `agent_index = summarizer_index` and an error
/// when either call failed, in which case the caller falls back to a vote.
pub fn summarize(
    gateway: &Gateway,
    question: &str,
    style: ReasoningStyle,
    traces: &[&AgentTrace],
    max_tokens: u32,
    summarizer_index: usize,
) -> AgentTrace {
    let params = DecodingParams::greedy(max_tokens);
    let mut trace = AgentTrace {
        agent_index: summarizer_index,
        exemplar_ids: Vec::new(),
        prompts: Vec::new(),
        completions: Vec::new(),
        raw_answer: String::new(),
        canonical_answer: String::new(),
        decoding: params,
        error: None,
    };
    let candidates: Vec<&str> = traces.iter().map(|t| t.candidate(style)).collect();
    let prompt = match render_summarizer(question, &candidates) {
        Ok(p) => p,
        Err(e) => {
            trace.error = Some(e.to_string());
            return trace;
        }
    };
    if let Err(e) = run_staged(
        gateway,
        &prompt,
        params,
        Phase::Validation,
        None,
        &mut trace.prompts,
        &mut trace.completions,
    ) {
        log::warn!("summarizer failed, falling back to vote: {e}");
        trace.error = Some(e);
        return trace;
    }
    trace.raw_answer = extract_answer(prompt.kind, &trace.completions).expect("two completions");
    trace
}
