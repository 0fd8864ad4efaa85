use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mamr_core::combo::{Aggregation, AgentTopology, MemoryMode, MethodCombo, ReasoningStyle};
use mamr_core::config::RunConfig;
use mamr_core::gateway::{Gateway, HttpBackend, HttpConfig, HttpEmbedder, MockEmbedder, ScriptRule, ScriptedBackend};
use mamr_core::memory::{build_frozen, load_bank, save_bank, train_learned_ap, train_learned_ncot, RetrievalMode, TrainerConfig};
use mamr_core::runner::{self, enumerate_matrix, predict_calls, ExecuteOptions, Family, FrozenBank, StatsRow};
use mamr_core::tasks::{self, Dataset, SynthConfig, SynthTask};
use mamr_core::{validate_combo, TaskId};

const SCRIPT_FALLBACK: &str = "I am not sure.";

#[derive(Parser)]
#[command(name = "mamr", version, about = "Multi-agent reasoning experiments with exemplar memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and scripted-reasoner files.
    Synth(SynthCmd),
    /// Build a frozen bank with one greedy zero-shot agent over the training split.
    BuildMemory(BuildCmd),
    /// Train a learned bank (few-shot CoT or analogical).
    TrainMemory(TrainCmd),
    /// Run an experiment family or explicit combinations.
    Run(RunCmd),
    /// Print and merge result tables.
    Report(ReportCmd),
}

#[derive(Args, Clone, Default)]
struct SynthArgs {
    /// Synthetic training examples.
    #[arg(long)]
    synth_train: Option<usize>,
    /// Synthetic validation examples.
    #[arg(long)]
    synth_validation: Option<usize>,
    /// Players per synthetic game.
    #[arg(long)]
    synth_people: Option<usize>,
    /// Swaps per synthetic game.
    #[arg(long)]
    synth_swaps: Option<usize>,
    /// Seed of the synthetic generator.
    #[arg(long)]
    synth_seed: Option<u64>,
}

impl SynthArgs {
    fn apply(&self, mut cfg: SynthConfig) -> SynthConfig {
        cfg.n_train = self.synth_train.unwrap_or(cfg.n_train);
        cfg.n_validation = self.synth_validation.unwrap_or(cfg.n_validation);
        cfg.n_people = self.synth_people.unwrap_or(cfg.n_people);
        cfg.n_swaps = self.synth_swaps.unwrap_or(cfg.n_swaps);
        cfg.seed = self.synth_seed.unwrap_or(cfg.seed);
        cfg
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// folio, raco, tso or synth.
    #[arg(long)]
    task: Option<TaskId>,
    /// Dataset location (falls back to $MAMR_DATA_DIR/<task>).
    #[arg(long)]
    data: Option<PathBuf>,
    /// `scripted:<file|perfect|pNN>` or `http:<url>`.
    #[arg(long)]
    backend: String,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write a p-correct script for each percentage.
    #[arg(long = "percent", value_delimiter = ',', default_values_t = [80u32])]
    percents: Vec<u32>,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args)]
struct BuildCmd {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainStyle {
    Ncot,
    Ap,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainRetrieval {
    Random,
    Similar,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    style: TrainStyle,
    #[arg(long, default_value = "greedy")]
    agents: AgentTopology,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_enum, default_value = "random")]
    retrieval: TrainRetrieval,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunCmd {
    #[command(flatten)]
    data: DataArgs,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<Family>,
    /// `style,agents,m,k,memory,aggregation`; repeatable.
    #[arg(long = "combo")]
    combos: Vec<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Agents per multi-agent combination in a family.
    #[arg(long)]
    agents: Option<usize>,
    /// Shots per agent in a family.
    #[arg(long)]
    shots: Option<usize>,
    /// Prebuilt frozen bank.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Keep full prompts and completions in the run records.
    #[arg(long)]
    record_traces: bool,
}

#[derive(Args)]
struct ReportCmd {
    /// Result CSV files to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write the merged table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Check(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(c) => cmd_synth(c),
        Command::BuildMemory(c) => cmd_build_memory(c),
        Command::TrainMemory(c) => cmd_train_memory(c),
        Command::Run(c) => cmd_run(c),
        Command::Report(c) => cmd_report(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_synth(c: SynthCmd) -> Result<(), Failure> {
    let task = tasks::synth_tso(&c.synth.apply(SynthConfig::default())).map_err(|e| usage(e.to_string()))?;
    tasks::save_examples(&task.dataset, &c.out_dir).context("writing dataset")?;
    let perfect = c.out_dir.join("perfect.jsonl");
    ScriptedBackend::write_jsonl(&task.perfect_script(), &perfect).context("writing script")?;
    println!("wrote {} train / {} validation examples to {}", task.dataset.train.len(), task.dataset.validation.len(), c.out_dir.display());
    println!("wrote {}", perfect.display());
    for p in c.percents {
        if p > 100 {
            return Err(usage(format!("percentage {p} exceeds 100")));
        }
        let path = c.out_dir.join(format!("p{p}.jsonl"));
        ScriptedBackend::write_jsonl(&task.p_correct_script(p), &path).context("writing script")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Resolved dataset plus the synthetic generator output when the task is synthetic.
struct Inputs {
    dataset: Dataset,
    synth: Option<SynthTask>,
}

fn resolve_dataset(task: TaskId, data: Option<&Path>, synth: SynthConfig) -> Result<Inputs, Failure> {
    let data = data
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("MAMR_DATA_DIR").map(|d| PathBuf::from(d).join(task.as_str())));
    match (task, data) {
        (TaskId::Synthetic, None) => {
            let t = tasks::synth_tso(&synth).map_err(|e| usage(e.to_string()))?;
            Ok(Inputs {
                dataset: t.dataset.clone(),
                synth: Some(t),
            })
        }
        (_, Some(path)) => {
            let loaded = tasks::load_dataset(task, &path).with_context(|| format!("loading {task} from {}", path.display()))?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            Ok(Inputs {
                dataset: loaded.dataset,
                synth: None,
            })
        }
        (_, None) => Err(usage(format!("task {task} needs --data or MAMR_DATA_DIR"))),
    }
}

fn synth_script_name(spec: &str) -> Option<Option<u32>> {
    let stem = spec.strip_suffix(".jsonl").unwrap_or(spec);
    if stem == "perfect" {
        return Some(None);
    }
    stem.strip_prefix('p')?.parse::<u32>().ok().filter(|p| *p <= 100).map(Some)
}

fn make_gateway(backend: &str, inputs: &Inputs, embedding_dim: usize) -> Result<Gateway, Failure> {
    if let Some(rest) = backend.strip_prefix("scripted:") {
        let path = Path::new(rest);
        let scripted = if path.is_file() {
            ScriptedBackend::from_jsonl(path, SCRIPT_FALLBACK).context("loading script")?
        } else if let (Some(which), Some(task)) = (synth_script_name(rest), &inputs.synth) {
            let rules: Vec<ScriptRule> = match which {
                None => task.perfect_script(),
                Some(p) => task.p_correct_script(p),
            };
            let name = rest.strip_suffix(".jsonl").unwrap_or(rest);
            ScriptedBackend::new(rules, SCRIPT_FALLBACK)
                .context("building synthetic script")?
                .with_name(format!("scripted:{name}"))
        } else {
            return Err(usage(format!("script `{rest}` not found (built-in scripts need --task synth)")));
        };
        return Ok(Gateway::new(Arc::new(scripted)).with_embedder(Arc::new(MockEmbedder::new(embedding_dim))));
    }
    if let Some(url) = backend.strip_prefix("http:") {
        let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
        let mut gw = Gateway::new(Arc::new(HttpBackend::new(HttpConfig::from_env(url))));
        if let Ok(embed_url) = std::env::var("MAMR_EMBED_URL") {
            let mut cfg = HttpConfig::from_env(embed_url);
            if let Ok(model) = std::env::var("MAMR_EMBED_MODEL") {
                cfg.model = model;
            }
            gw = gw.with_embedder(Arc::new(HttpEmbedder::new(cfg)));
        }
        return Ok(gw);
    }
    Err(usage(format!("backend `{backend}` must start with scripted: or http:")))
}

fn ledger_line(l: &mamr_core::gateway::LedgerSnapshot) -> String {
    format!(
        "training calls {}, validation calls {}, embedding calls {}, failed {}",
        l.training_calls, l.validation_calls, l.total_embedding_calls, l.failed_calls
    )
}

fn cmd_build_memory(c: BuildCmd) -> Result<(), Failure> {
    let task = c.data.task.ok_or_else(|| usage("--task is required"))?;
    let inputs = resolve_dataset(task, c.data.data.as_deref(), c.data.synth.apply(SynthConfig::default()))?;
    let gw = make_gateway(&c.data.backend, &inputs, 64)?;
    let max_tokens = c.data.max_tokens.unwrap_or(mamr_core::types::DEFAULT_MAX_TOKENS);
    let report = build_frozen(&inputs.dataset.train, &gw, task, max_tokens).context("building frozen bank")?;
    save_bank(&report.bank, &c.out).context("writing bank")?;
    let ledger = gw.ledger().snapshot();
    println!("bank size {} of {} training examples", report.bank.len(), inputs.dataset.train.len());
    println!("{}", ledger_line(&ledger));
    let expected = 2 * inputs.dataset.train.len() as u64;
    if ledger.training_calls != expected {
        return Err(Failure::Check(format!("expected {expected} training calls, made {}", ledger.training_calls)));
    }
    Ok(())
}

fn cmd_train_memory(c: TrainCmd) -> Result<(), Failure> {
    let task = c.data.task.ok_or_else(|| usage("--task is required"))?;
    let (style, retrieval, memory) = match (c.style, c.retrieval) {
        (TrainStyle::Ncot, TrainRetrieval::Random) => (ReasoningStyle::Ncot, RetrievalMode::Random, MemoryMode::LearnedRandom),
        (TrainStyle::Ncot, TrainRetrieval::Similar) => (ReasoningStyle::Ncot, RetrievalMode::Similar, MemoryMode::LearnedSimilar),
        (TrainStyle::Ap, TrainRetrieval::Random) => (ReasoningStyle::ApMemory, RetrievalMode::Random, MemoryMode::LearnedRandom),
        (TrainStyle::Ap, TrainRetrieval::Similar) => (ReasoningStyle::ApMemory, RetrievalMode::Similar, MemoryMode::LearnedSimilar),
    };
    let combo = MethodCombo::new(style, c.agents, c.m, c.k, memory, Aggregation::Vote);
    let violations = validate_combo(&combo);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(usage(format!("invalid training setup {combo}: {}", msgs.join("; "))));
    }
    let inputs = resolve_dataset(task, c.data.data.as_deref(), c.data.synth.apply(SynthConfig::default()))?;
    let gw = make_gateway(&c.data.backend, &inputs, 64)?;
    let cfg = TrainerConfig {
        agents: c.agents,
        m: c.m,
        k: c.k,
        retrieval,
        max_tokens: c.data.max_tokens.unwrap_or(mamr_core::types::DEFAULT_MAX_TOKENS),
        seed: runner::run_seed(c.seed, 0),
    };
    let train = &inputs.dataset.train;
    let report = match c.style {
        TrainStyle::Ncot => train_learned_ncot(train, &gw, task, &cfg),
        TrainStyle::Ap => train_learned_ap(train, &gw, task, &cfg),
    }
    .context("training bank")?;
    save_bank(&report.bank, &c.out).context("writing bank")?;
    let ledger = gw.ledger().snapshot();
    let predicted = predict_calls(&combo, train.len() as u64, 0, 1);
    println!("bank size {} (bound {})", report.bank.len(), predicted.max_exemplars_stored);
    println!("{}", ledger_line(&ledger));
    if ledger.training_calls != predicted.training_calls {
        return Err(Failure::Check(format!(
            "expected {} training calls, made {}",
            predicted.training_calls, ledger.training_calls
        )));
    }
    Ok(())
}

fn cmd_run(c: RunCmd) -> Result<(), Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(t) = c.data.task {
        cfg.task = t;
    }
    if let Some(f) = c.family {
        cfg.family = Some(f);
    }
    if !c.combos.is_empty() {
        cfg.combos = c.combos.clone();
    }
    cfg.runs = c.runs.unwrap_or(cfg.runs);
    cfg.master_seed = c.seed.unwrap_or(cfg.master_seed);
    cfg.agents = c.agents.unwrap_or(cfg.agents);
    cfg.shots = c.shots.unwrap_or(cfg.shots);
    cfg.max_tokens = c.data.max_tokens.unwrap_or(cfg.max_tokens);
    cfg.record_traces |= c.record_traces;
    if c.data.data.is_some() {
        cfg.data = c.data.data.clone();
    }
    if c.bank.is_some() {
        cfg.bank = c.bank.clone();
    }
    cfg.synth = c.data.synth.apply(cfg.synth);

    let mut combos = cfg.parsed_combos().map_err(|e| usage(e.to_string()))?;
    if let Some(f) = cfg.family {
        combos.extend(enumerate_matrix(f, cfg.agents, cfg.shots));
    }
    if combos.is_empty() {
        return Err(usage("give --family, --combo or a config listing combinations"));
    }
    let mut bad = Vec::new();
    for combo in &combos {
        let v = validate_combo(combo);
        if !v.is_empty() {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            bad.push(format!("{combo}: {}", msgs.join("; ")));
        }
    }
    if !bad.is_empty() {
        return Err(usage(format!("invalid combinations:\n  {}", bad.join("\n  "))));
    }
    if cfg.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }

    let inputs = resolve_dataset(cfg.task, cfg.data.as_deref(), cfg.synth)?;
    let gw = make_gateway(&c.data.backend, &inputs, cfg.embedding_dim)?;

    let frozen = if combos.iter().any(|c| c.memory.is_frozen()) {
        Some(match &cfg.bank {
            Some(path) => FrozenBank {
                bank: load_bank(path).context("loading frozen bank")?,
                build_ledger: None,
            },
            None => {
                let build_gw = gw.with_fresh_ledger();
                let report = build_frozen(&inputs.dataset.train, &build_gw, cfg.task, cfg.max_tokens).context("building frozen bank")?;
                eprintln!("frozen bank: {} exemplars", report.bank.len());
                FrozenBank {
                    bank: report.bank,
                    build_ledger: Some(build_gw.ledger().snapshot()),
                }
            }
        })
    } else {
        None
    };

    let opts = ExecuteOptions {
        runs: cfg.runs,
        master_seed: cfg.master_seed,
        max_tokens: cfg.max_tokens,
        record_traces: cfg.record_traces,
    };
    let reports = runner::execute(&combos, &inputs.dataset, &gw, frozen.as_ref(), &opts).context("running experiments")?;
    let (csv_path, jsonl_path) = runner::write_results(&reports, &c.out_dir).context("writing results")?;

    let mut failures = Vec::new();
    for r in &reports {
        let status = if r.check.passed() { "ok" } else { "MISMATCH" };
        println!(
            "{:<48} {:>5.1} ± {:>4.1}  calls {status} ({})",
            r.stats.combo.to_spec_string(),
            100.0 * r.stats.mean_accuracy,
            100.0 * r.stats.two_sigma,
            r.check
        );
        if !r.check.passed() {
            failures.push(format!("{}: {}", r.stats.combo, r.check));
        }
    }
    println!("wrote {} and {}", csv_path.display(), jsonl_path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("call counts differ from the compute model:\n  {}", failures.join("\n  "))))
    }
}

fn cmd_report(c: ReportCmd) -> Result<(), Failure> {
    let mut rows: Vec<StatsRow> = Vec::new();
    for path in &c.inputs {
        rows.extend(runner::read_stats_csv(path).with_context(|| format!("reading {}", path.display()))?);
    }
    if rows.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("no result rows in the given files")));
    }
    runner::sort_rows(&mut rows);
    rows.dedup();

    let mut best: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in &rows {
        let e = best.entry((r.task.clone(), r.model.clone())).or_insert(f64::MIN);
        *e = e.max(r.mean);
    }
    println!("| task | model | style | agents | M | K | memory | aggregation | accuracy |");
    println!("|---|---|---|---|---|---|---|---|---|");
    for r in &rows {
        let cell = format!("{:.1} ± {:.1}", r.mean, r.two_sigma);
        let cell = if best[&(r.task.clone(), r.model.clone())] == r.mean {
            format!("**{cell}**")
        } else {
            cell
        };
        println!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {cell} |",
            r.task, r.model, r.style, r.agents, r.m, r.k, r.memory, r.aggregation
        );
    }
    if let Some(out) = &c.out {
        runner::write_stats_csv(&rows, out).context("writing merged table")?;
    }
    Ok(())
}
