//! Experiment matrices, repeated runs, error bars and the call-count check.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canon::TaskId;
use crate::combo::{
    validate_combo, Aggregation, AgentTopology, MemoryMode, MethodCombo, ReasoningStyle,
};
use crate::gateway::{Gateway, LedgerSnapshot};
use crate::memory::{train_learned_ap, train_learned_ncot, MemoryBank, MemoryError, RetrievalMode, TrainerConfig};
use crate::orchestrate::{ExampleContext, ExampleOutcome, OrchestrateError};
use crate::seed::seed_stream;
use crate::tasks::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Main,
    ApVsCot,
    ShotsVsVaried,
    Summarizer,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Main, Family::ApVsCot, Family::ShotsVsVaried, Family::Summarizer];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Main => "main",
            Family::ApVsCot => "ap_vs_cot",
            Family::ShotsVsVaried => "shots_vs_varied",
            Family::Summarizer => "summarizer",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .iter()
            .find(|f| f.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown family `{s}` (expected main, ap_vs_cot, shots_vs_varied or summarizer)"))
    }
}

/// Shots used by the greedy and identical-context arms of the shots ablation.
pub const ABLATION_TOTAL_SHOTS: usize = 15;
/// Agents used by the multi-agent arms of the shots ablation.
pub const ABLATION_AGENTS: usize = 5;

fn legal_grid(
    styles: &[ReasoningStyle],
    memories: &[MemoryMode],
    aggregations: &[Aggregation],
    m: usize,
    k: usize,
) -> Vec<MethodCombo> {
    let mut out = Vec::new();
    for &style in styles {
        for &agents in AgentTopology::ALL {
            for &memory in memories {
                for &aggregation in aggregations {
                    let m = if agents == AgentTopology::Greedy { 1 } else { m };
                    let k = if memory == MemoryMode::None { 0 } else { k };
                    let c = MethodCombo::new(style, agents, m, k, memory, aggregation);
                    if validate_combo(&c).is_empty() {
                        out.push(c);
                    }
                }
            }
        }
    }
    out.sort();
    out
}

/// Legal combinations of one experiment family with `m` agents and `k` shots.
///
/// The shots ablation ignores `m` and `k`: it compares one greedy agent with
/// 15 shots, 5 self-consistency agents sharing 15 shots and 5 varied agents
/// with 3 shots each.
pub fn enumerate_matrix(family: Family, m: usize, k: usize) -> Vec<MethodCombo> {
    use MemoryMode as Mm;
    use ReasoningStyle as S;
    match family {
        Family::Main => legal_grid(
            &[S::Direct, S::Zcot, S::Ncot],
            &[Mm::None, Mm::FrozenFixed, Mm::FrozenRandom, Mm::LearnedRandom, Mm::LearnedSimilar],
            &[Aggregation::Vote],
            m,
            k,
        ),
        Family::ApVsCot => legal_grid(
            &[S::Zcot, S::Ncot, S::Ap, S::ApMemory],
            &[Mm::None, Mm::LearnedRandom, Mm::LearnedSimilar],
            &[Aggregation::Vote],
            m,
            k,
        ),
        Family::ShotsVsVaried => vec![
            MethodCombo::new(S::Ncot, AgentTopology::Greedy, 1, ABLATION_TOTAL_SHOTS, Mm::FrozenRandom, Aggregation::Vote),
            MethodCombo::new(S::Ncot, AgentTopology::Sc, ABLATION_AGENTS, ABLATION_TOTAL_SHOTS, Mm::FrozenRandom, Aggregation::Vote),
            MethodCombo::new(
                S::Ncot,
                AgentTopology::Varied,
                ABLATION_AGENTS,
                ABLATION_TOTAL_SHOTS / ABLATION_AGENTS,
                Mm::FrozenRandom,
                Aggregation::Vote,
            ),
        ],
        Family::Summarizer => legal_grid(
            &[S::Direct, S::Zcot, S::Ncot],
            &[Mm::None, Mm::FrozenFixed, Mm::FrozenRandom],
            &[Aggregation::Vote, Aggregation::Summarizer],
            m,
            k,
        )
        .into_iter()
        .filter(|c| c.agents != AgentTopology::Greedy)
        .collect(),
    }
}

/// Closed-form call counts and storage bound for a combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCalls {
    pub training_calls: u64,
    pub validation_calls: u64,
    pub max_exemplars_stored: u64,
}

/// Expected totals over `r` runs on `n_t` training and `n_v` validation examples.
///
/// A frozen bank is built once per task and model and shared by every
/// frozen-memory combination, so its `2·N_t` training calls are not multiplied by `r`.
pub fn predict_calls(combo: &MethodCombo, n_t: u64, n_v: u64, r: u64) -> PredictedCalls {
    let m = combo.m as u64;
    let k = combo.k as u64;
    let per_agent = combo.style.calls_per_agent();
    let mut validation_calls = per_agent * m * n_v * r;
    if combo.aggregation == Aggregation::Summarizer {
        validation_calls += 2 * n_v * r;
    }
    let (training_calls, max_exemplars_stored) = match (combo.style, combo.memory) {
        (_, MemoryMode::None) => (0, 0),
        (_, MemoryMode::FrozenFixed | MemoryMode::FrozenRandom) => (2 * n_t, n_t),
        (ReasoningStyle::ApMemory, _) => (m * n_t * r, m * k * n_t * r),
        (_, MemoryMode::LearnedRandom | MemoryMode::LearnedSimilar) => (2 * m * n_t * r, m * n_t * r),
    };
    PredictedCalls {
        training_calls,
        validation_calls,
        max_exemplars_stored,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("error bars need at least one accuracy")]
pub struct NoAccuracies;

/// Mean and two sample standard deviations (divisor `R − 1`); zero spread for one run.
pub fn error_bars(accuracies: &[f64]) -> Result<(f64, f64), NoAccuracies> {
    if accuracies.is_empty() {
        return Err(NoAccuracies);
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    if accuracies.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = accuracies.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, 2.0 * (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: TaskId,
    pub model: String,
    pub combo: MethodCombo,
    pub run_index: usize,
    pub run_seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Examples where every agent failed.
    pub failures: usize,
    /// Exemplars in the bank trained for this run (learned memory only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_size: Option<usize>,
    pub ledger: LedgerSnapshot,
    pub outcomes: Vec<ExampleOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboStats {
    pub task: TaskId,
    pub model: String,
    pub combo: MethodCombo,
    pub mean_accuracy: f64,
    pub two_sigma: f64,
    pub runs: usize,
    pub failures: usize,
}

/// Observed and predicted call totals for one combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub predicted: PredictedCalls,
    pub training_calls: u64,
    pub validation_calls: u64,
    pub exemplars_stored: u64,
    /// False when a frozen bank was loaded from disk and its build cost is unknown.
    pub training_checked: bool,
}

impl LedgerCheck {
    pub fn passed(&self) -> bool {
        (!self.training_checked || self.training_calls == self.predicted.training_calls)
            && self.validation_calls == self.predicted.validation_calls
            && self.exemplars_stored <= self.predicted.max_exemplars_stored
    }
}

impl fmt::Display for LedgerCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let training = if self.training_checked {
            format!("{}/{}", self.training_calls, self.predicted.training_calls)
        } else {
            String::from("unchecked")
        };
        write!(
            f,
            "training {training}, validation {}/{}, stored {}<={}",
            self.validation_calls, self.predicted.validation_calls, self.exemplars_stored, self.predicted.max_exemplars_stored
        )
    }
}

#[derive(Debug, Clone)]
pub struct ComboReport {
    pub stats: ComboStats,
    pub runs: Vec<RunResult>,
    pub check: LedgerCheck,
}

/// A frozen bank shared across runs and combinations.
#[derive(Debug, Clone)]
pub struct FrozenBank {
    pub bank: MemoryBank,
    /// Calls spent building it, when it was built in this process.
    pub build_ledger: Option<LedgerSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecuteOptions {
    pub runs: usize,
    pub master_seed: u64,
    pub max_tokens: u32,
    pub record_traces: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Orchestrate(#[from] OrchestrateError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Seed of run `r`.
pub fn run_seed(master_seed: u64, r: usize) -> u64 {
    seed_stream(master_seed, &[format!("run:{r}")]).expect("non-empty labels")
}

fn preflight(combos: &[MethodCombo], gateway: &Gateway, frozen: Option<&FrozenBank>, opts: &ExecuteOptions) -> Result<(), RunError> {
    if opts.runs == 0 {
        return Err(RunError::Config("at least one run is required".into()));
    }
    for c in combos {
        let v = validate_combo(c);
        if !v.is_empty() {
            let msg: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err(RunError::Config(format!("invalid combination {c}: {}", msg.join("; "))));
        }
        if c.memory.is_frozen() && frozen.is_none() {
            return Err(RunError::Config(format!("combination {c} needs a frozen memory bank")));
        }
        if c.memory.retrieval() == Some(RetrievalMode::Similar) && !gateway.has_embedder() {
            return Err(RunError::Config(format!("combination {c} needs an embedding backend")));
        }
    }
    Ok(())
}

/// Run every combination `opts.runs` times on the validation split.
///
/// Learned banks are retrained from scratch for each run; the frozen bank is
/// shared. Configuration problems are reported before any model call.
pub fn execute(
    combos: &[MethodCombo],
    dataset: &Dataset,
    gateway: &Gateway,
    frozen: Option<&FrozenBank>,
    opts: &ExecuteOptions,
) -> Result<Vec<ComboReport>, RunError> {
    preflight(combos, gateway, frozen, opts)?;
    combos.iter().map(|c| execute_combo(c, dataset, gateway, frozen, opts)).collect()
}

fn execute_combo(
    combo: &MethodCombo,
    dataset: &Dataset,
    gateway: &Gateway,
    frozen: Option<&FrozenBank>,
    opts: &ExecuteOptions,
) -> Result<ComboReport, RunError> {
    let model = gateway.model_name();
    let mut runs = Vec::with_capacity(opts.runs);
    let mut total = LedgerSnapshot::default();
    let mut stored = 0u64;

    for r in 0..opts.runs {
        let seed = run_seed(opts.master_seed, r);
        let gw = gateway.with_fresh_ledger();
        let learned = if combo.memory.is_learned() {
            let cfg = TrainerConfig {
                agents: combo.agents,
                m: combo.m,
                k: combo.k,
                retrieval: combo.memory.retrieval().expect("learned memory retrieves"),
                max_tokens: opts.max_tokens,
                seed,
            };
            let report = if combo.style == ReasoningStyle::ApMemory {
                train_learned_ap(&dataset.train, &gw, dataset.task, &cfg)?
            } else {
                train_learned_ncot(&dataset.train, &gw, dataset.task, &cfg)?
            };
            Some(report.bank)
        } else {
            None
        };
        let bank = learned.as_ref().or(frozen.filter(|_| combo.memory.is_frozen()).map(|f| &f.bank));

        let ctx = ExampleContext {
            combo: *combo,
            task: dataset.task,
            gateway: &gw,
            bank,
            run_seed: seed,
            max_tokens: opts.max_tokens,
        };
        ctx.check()?;
        let mut outcomes = dataset
            .validation
            .par_iter()
            .map(|ex| ctx.run_example(ex))
            .collect::<Result<Vec<_>, _>>()?;
        if !opts.record_traces {
            outcomes.iter_mut().for_each(ExampleOutcome::strip_transcripts);
        }
        let correct = outcomes.iter().filter(|o| o.correct).count();
        let failures = outcomes.iter().filter(|o| o.failed).count();
        let n = outcomes.len();
        let ledger = gw.ledger().snapshot();
        total.merge(&ledger);
        let bank_size = learned.as_ref().map(MemoryBank::len);
        stored += bank_size.unwrap_or(0) as u64;
        log::info!(
            "{combo} run {r}: {correct}/{n} correct, {} calls",
            ledger.total_generation_calls
        );
        runs.push(RunResult {
            task: dataset.task,
            model: model.clone(),
            combo: *combo,
            run_index: r,
            run_seed: seed,
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            correct,
            total: n,
            failures,
            bank_size,
            ledger,
            outcomes,
        });
    }

    let mut training_checked = true;
    if combo.memory.is_frozen() {
        let f = frozen.expect("checked in preflight");
        match &f.build_ledger {
            Some(build) => total.merge(&LedgerSnapshot {
                training_calls: build.training_calls,
                training: build.training.clone(),
                ..Default::default()
            }),
            None => training_checked = false,
        }
        stored = f.bank.len() as u64;
    }

    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, two_sigma) = error_bars(&accs).expect("runs >= 1");
    let predicted = predict_calls(
        combo,
        dataset.train.len() as u64,
        dataset.validation.len() as u64,
        opts.runs as u64,
    );
    let check = LedgerCheck {
        predicted,
        training_calls: total.training_calls,
        validation_calls: total.validation_calls,
        exemplars_stored: stored,
        training_checked,
    };
    if !check.passed() {
        log::warn!("{combo}: call counts differ from the compute model: {check}");
    }
    Ok(ComboReport {
        stats: ComboStats {
            task: dataset.task,
            model,
            combo: *combo,
            mean_accuracy,
            two_sigma,
            runs: runs.len(),
            failures: runs.iter().map(|r| r.failures).sum(),
        },
        runs,
        check,
    })
}

/// One row of the results table. Accuracies are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub task: String,
    pub model: String,
    pub style: String,
    pub agents: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub memory: String,
    pub aggregation: String,
    pub mean: f64,
    pub two_sigma: f64,
    #[serde(rename = "R")]
    pub runs: usize,
    pub failures: usize,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl From<&ComboStats> for StatsRow {
    fn from(s: &ComboStats) -> Self {
        Self {
            task: s.task.to_string(),
            model: s.model.clone(),
            style: s.combo.style.to_string(),
            agents: s.combo.agents.to_string(),
            m: s.combo.m,
            k: s.combo.k,
            memory: s.combo.memory.to_string(),
            aggregation: s.combo.aggregation.to_string(),
            mean: round1(100.0 * s.mean_accuracy),
            two_sigma: round1(100.0 * s.two_sigma),
            runs: s.runs,
            failures: s.failures,
        }
    }
}

impl StatsRow {
    /// Parsed combination, when the row's fields are recognised.
    pub fn combo(&self) -> Option<MethodCombo> {
        format!("{},{},{},{},{},{}", self.style, self.agents, self.m, self.k, self.memory, self.aggregation)
            .parse()
            .ok()
    }

    /// Sort key: task, then style, agents, memory and aggregation in
    /// declaration order, then agent and shot counts, then model.
    #[allow(clippy::type_complexity)]
    fn key(&self) -> (String, Option<(ReasoningStyle, AgentTopology, MemoryMode, Aggregation, usize, usize)>, String, String, String, String, String, usize, usize) {
        (
            self.task.clone(),
            self.combo().map(|c| (c.style, c.agents, c.memory, c.aggregation, c.m, c.k)),
            self.model.clone(),
            self.style.clone(),
            self.agents.clone(),
            self.memory.clone(),
            self.aggregation.clone(),
            self.m,
            self.k,
        )
    }
}

/// Sort rows deterministically by task, model and combination.
pub fn sort_rows(rows: &mut [StatsRow]) {
    rows.sort_by_key(StatsRow::key);
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write the stats table. Percentages carry one decimal.
pub fn write_stats_csv(rows: &[StatsRow], path: &Path) -> Result<(), RunError> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "task", "model", "style", "agents", "M", "K", "memory", "aggregation", "mean", "two_sigma", "R", "failures",
    ])
    .map_err(csv_err(path))?;
    for r in &rows {
        w.write_record([
            r.task.clone(),
            r.model.clone(),
            r.style.clone(),
            r.agents.clone(),
            r.m.to_string(),
            r.k.to_string(),
            r.memory.clone(),
            r.aggregation.clone(),
            format!("{:.1}", r.mean),
            format!("{:.1}", r.two_sigma),
            r.runs.to_string(),
            r.failures.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatsRow>, RunError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    rdr.deserialize().collect::<Result<Vec<StatsRow>, _>>().map_err(csv_err(path))
}

/// Write `results.csv` and `runs.jsonl` into `dir`; returns their paths.
pub fn write_results(reports: &[ComboReport], dir: &Path) -> Result<(PathBuf, PathBuf), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("results.csv");
    let rows: Vec<StatsRow> = reports.iter().map(|r| StatsRow::from(&r.stats)).collect();
    write_stats_csv(&rows, &csv_path)?;

    let jsonl_path = dir.join("runs.jsonl");
    let file = fs::File::create(&jsonl_path).map_err(io_err(&jsonl_path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut ordered: Vec<&ComboReport> = reports.iter().collect();
    ordered.sort_by_key(|r| StatsRow::from(&r.stats).key());
    for report in ordered {
        for run in &report.runs {
            let line = serde_json::to_string(run).expect("run result serializes");
            writeln!(out, "{line}").map_err(io_err(&jsonl_path))?;
        }
    }
    out.flush().map_err(io_err(&jsonl_path))?;
    Ok((csv_path, jsonl_path))
}
