//! Bank construction: the frozen single-pass harvest and the two learned trainers.

use rayon::prelude::*;

use super::{BankKind, MemoryBank, MemoryError, RetrievalMode, RetrievalSpec};
use crate::canon::{answers_match, TaskId};
use crate::combo::{AgentTopology, ReasoningStyle};
use crate::gateway::{Gateway, Phase};
use crate::orchestrate::{decoding_for, plan_exemplars, run_agent, AgentRun, AgentTrace};
use crate::prompting::parse_relevant_problems;
use crate::seed::derive;
use crate::types::{DecodingParams, TaskExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainerConfig {
    pub agents: AgentTopology,
    pub m: usize,
    pub k: usize,
    pub retrieval: RetrievalMode,
    pub max_tokens: u32,
    /// Seed of the run the bank belongs to.
    pub seed: u64,
}

impl TrainerConfig {
    fn check(&self, gateway: &Gateway) -> Result<(), MemoryError> {
        if self.k == 0 {
            return Err(MemoryError::Config("learned training needs K >= 1".into()));
        }
        if self.m == 0 {
            return Err(MemoryError::Config("learned training needs at least one agent".into()));
        }
        if self.agents == AgentTopology::Greedy && self.m != 1 {
            return Err(MemoryError::Config("greedy training uses exactly one agent".into()));
        }
        if self.retrieval == RetrievalMode::Similar && !gateway.has_embedder() {
            return Err(MemoryError::Config("similar retrieval needs an embedding backend".into()));
        }
        Ok(())
    }

    fn spec(&self, seed_base: u64) -> RetrievalSpec {
        RetrievalSpec {
            mode: self.retrieval,
            k: self.k,
            fixed_seed: (self.retrieval == RetrievalMode::Fixed).then(|| derive(seed_base, &["fixed"])),
        }
    }
}

/// What happened on one training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingStep {
    pub example_id: String,
    /// Exemplars shown to each agent.
    pub shots: Vec<usize>,
    /// Agents whose answer matched the label.
    pub correct_agents: Vec<usize>,
    pub appended: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub bank: MemoryBank,
    pub steps: Vec<TrainingStep>,
    /// Non-fatal problems: failed calls, unparseable completions.
    pub warnings: Vec<String>,
}

fn warn(warnings: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    warnings.push(msg);
}

/// Single greedy zero-shot CoT pass over `train`, keeping correctly answered examples in order.
pub fn build_frozen(
    train: &[TaskExample],
    gateway: &Gateway,
    task: TaskId,
    max_tokens: u32,
) -> Result<TrainingReport, MemoryError> {
    let traces: Vec<AgentTrace> = train
        .par_iter()
        .map(|ex| {
            let run = AgentRun {
                style: ReasoningStyle::Zcot,
                question: &ex.question,
                exemplars: &[],
                params: DecodingParams::greedy(max_tokens),
                phase: Phase::Training,
                agent_index: 0,
            };
            run_agent(gateway, task, &run)
        })
        .collect();

    let mut bank = MemoryBank::new(task, gateway.model_name(), BankKind::Frozen);
    let mut steps = Vec::with_capacity(train.len());
    let mut warnings = Vec::new();
    for (ex, trace) in train.iter().zip(traces) {
        let mut step = TrainingStep {
            example_id: ex.id.clone(),
            shots: vec![0],
            correct_agents: Vec::new(),
            appended: 0,
        };
        if let Some(e) = &trace.error {
            warn(&mut warnings, format!("skipping training example {}: {e}", ex.id));
        } else if answers_match(task, &trace.raw_answer, &ex.gold_answer) {
            step.correct_agents.push(0);
            let thoughts = trace.completions[0].trim();
            if thoughts.is_empty() {
                warn(&mut warnings, format!("example {} answered correctly with no reasoning", ex.id));
            } else {
                bank.append(
                    format!("frozen-{}", ex.id),
                    ex.question.clone(),
                    thoughts.to_string(),
                    trace.raw_answer.clone(),
                    None,
                    Some(ex.id.clone()),
                )?;
                step.appended = 1;
            }
        }
        steps.push(step);
    }
    Ok(TrainingReport { bank, steps, warnings })
}

enum Harvest {
    /// Store the question with the agent's own chain of thought.
    Thoughts,
    /// Store up to K problems the agent generated for itself.
    GeneratedProblems,
}

fn train_learned(
    train: &[TaskExample],
    gateway: &Gateway,
    task: TaskId,
    cfg: &TrainerConfig,
    style: ReasoningStyle,
    harvest: Harvest,
) -> Result<TrainingReport, MemoryError> {
    cfg.check(gateway)?;
    let kind = match harvest {
        Harvest::Thoughts => BankKind::LearnedNcot,
        Harvest::GeneratedProblems => BankKind::LearnedAp,
    };
    let seed_base = derive(cfg.seed, &["train"]);
    let spec = cfg.spec(seed_base);
    let similar = cfg.retrieval == RetrievalMode::Similar;

    let mut bank = MemoryBank::new(task, gateway.model_name(), kind);
    let mut steps = Vec::with_capacity(train.len());
    let mut warnings = Vec::new();

    for ex in train {
        let query_embedding = if similar {
            match gateway.embed(&ex.question) {
                Ok(v) => Some(v),
                Err(e) => {
                    warn(&mut warnings, format!("skipping training example {}: embedding failed: {e}", ex.id));
                    continue;
                }
            }
        } else {
            None
        };

        let (shots, traces) = {
            let plan = plan_exemplars(
                Some(&bank),
                Some(spec),
                cfg.agents,
                cfg.m,
                ex,
                query_embedding.as_deref(),
                seed_base,
            )?;
            let traces: Vec<AgentTrace> = plan
                .par_iter()
                .enumerate()
                .map(|(a, exemplars)| {
                    let run = AgentRun {
                        style,
                        question: &ex.question,
                        exemplars,
                        params: decoding_for(cfg.agents, cfg.max_tokens, seed_base, ex, a),
                        phase: Phase::Training,
                        agent_index: a,
                    };
                    run_agent(gateway, task, &run)
                })
                .collect();
            (plan.iter().map(Vec::len).collect::<Vec<_>>(), traces)
        };

        let mut step = TrainingStep {
            example_id: ex.id.clone(),
            shots,
            correct_agents: Vec::new(),
            appended: 0,
        };
        for trace in &traces {
            let a = trace.agent_index;
            if let Some(e) = &trace.error {
                warn(&mut warnings, format!("example {} agent {a} failed: {e}", ex.id));
                continue;
            }
            if !answers_match(task, &trace.raw_answer, &ex.gold_answer) {
                continue;
            }
            step.correct_agents.push(a);
            match harvest {
                Harvest::Thoughts => {
                    let thoughts = trace.completions[0].trim();
                    if thoughts.is_empty() {
                        warn(&mut warnings, format!("example {} agent {a}: correct but no reasoning", ex.id));
                        continue;
                    }
                    bank.append(
                        format!("ncot-{}-a{a}", ex.id),
                        ex.question.clone(),
                        thoughts.to_string(),
                        trace.raw_answer.clone(),
                        query_embedding.clone(),
                        Some(ex.id.clone()),
                    )?;
                    step.appended += 1;
                }
                Harvest::GeneratedProblems => {
                    let problems = match parse_relevant_problems(&trace.completions[0]) {
                        Ok(p) => p,
                        Err(e) => {
                            warn(&mut warnings, format!("example {} agent {a}: {e}", ex.id));
                            continue;
                        }
                    };
                    for (j, p) in problems.into_iter().take(cfg.k).enumerate() {
                        let embedding = if similar {
                            match gateway.embed(&p.question) {
                                Ok(v) => Some(v),
                                Err(e) => {
                                    warn(&mut warnings, format!("example {} agent {a} problem {j}: {e}", ex.id));
                                    continue;
                                }
                            }
                        } else {
                            None
                        };
                        bank.append(
                            format!("ap-{}-a{a}-p{j}", ex.id),
                            p.question,
                            p.text,
                            p.answer,
                            embedding,
                            Some(ex.id.clone()),
                        )?;
                        step.appended += 1;
                    }
                }
            }
        }
        steps.push(step);
    }
    Ok(TrainingReport { bank, steps, warnings })
}

/// Incremental few-shot CoT training: each correct agent stores the question with its own reasoning.
pub fn train_learned_ncot(
    train: &[TaskExample],
    gateway: &Gateway,
    task: TaskId,
    cfg: &TrainerConfig,
) -> Result<TrainingReport, MemoryError> {
    train_learned(train, gateway, task, cfg, ReasoningStyle::Ncot, Harvest::Thoughts)
}

/// Incremental analogical training: each correct agent stores the problems it generated.
pub fn train_learned_ap(
    train: &[TaskExample],
    gateway: &Gateway,
    task: TaskId,
    cfg: &TrainerConfig,
) -> Result<TrainingReport, MemoryError> {
    train_learned(train, gateway, task, cfg, ReasoningStyle::ApMemory, Harvest::GeneratedProblems)
}
