//! Dataset loaders and the synthetic shuffled-objects task.
//!
//! FOLIO is read from `folio-train.jsonl` / `folio-validation.jsonl`.
//! BIG-bench tasks are read either from pre-split `train.jsonl` /
//! `validation.jsonl` files (`inputs`, `targets` records) or from one or more
//! `task.json` files, in which case the last fifth of each file's examples is
//! held out for validation.
//!
//! The synthetic task deals one coloured ball to each of several players and
//! swaps them pairwise; its gold answer is known by simulation, which makes
//! it possible to script a model that is right on an exactly known subset.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canon::TaskId;
use crate::gateway::ScriptRule;
use crate::prompting::{ANSWER_CUE, DIRECT_CUE, THINK_CUE};
use crate::types::{Split, TaskExample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: TaskId,
    pub train: Vec<TaskExample>,
    pub validation: Vec<TaskExample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[TaskExample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
        }
    }
}

/// A dataset plus anything odd noticed while reading it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Config(String),
}

/// Published split sizes.
pub fn expected_counts(task: TaskId) -> Option<(usize, usize)> {
    match task {
        TaskId::Folio => Some((1004, 204)),
        TaskId::Raco => Some((1600, 400)),
        TaskId::Tso => Some((3000, 750)),
        TaskId::Synthetic => None,
    }
}

fn read(path: &Path) -> Result<String, TaskError> {
    fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_counts(dataset: &Dataset, warnings: &mut Vec<String>) {
    if let Some((t, v)) = expected_counts(dataset.task) {
        let (gt, gv) = (dataset.train.len(), dataset.validation.len());
        if (gt, gv) != (t, v) {
            let msg = format!(
                "{}: expected {t} train / {v} validation examples, found {gt} / {gv}",
                dataset.task
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
}

fn folio_label(raw: &str) -> Option<&'static str> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" => Some("True"),
        "false" => Some("False"),
        "unknown" | "uncertain" => Some("Unknown"),
        _ => None,
    }
}

/// Question text for a FOLIO record: premises one per line, then the query.
pub fn folio_question(premises: &[String], conclusion: &str) -> String {
    let mut q = String::new();
    for p in premises {
        q.push_str(p.trim());
        q.push('\n');
    }
    q.push_str("Is the conclusion True, False, or Unknown? ");
    q.push_str(conclusion.trim());
    q
}

fn folio_split(path: &Path, split: Split, warnings: &mut Vec<String>) -> Result<Vec<TaskExample>, TaskError> {
    let text = read(path)?;
    let tag = match split {
        Split::Train => "train",
        Split::Validation => "validation",
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| TaskError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let rec: Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let premises: Vec<String> = match rec.get("premises") {
            Some(Value::Array(xs)) => xs.iter().filter_map(Value::as_str).map(str::to_string).collect(),
            Some(Value::String(s)) => s.lines().map(str::to_string).filter(|l| !l.trim().is_empty()).collect(),
            _ => return Err(parse_err("missing `premises`".into())),
        };
        let conclusion = rec
            .get("conclusion")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err("missing `conclusion`".into()))?;
        let Some(label) = rec.get("label").and_then(Value::as_str).and_then(folio_label) else {
            let msg = format!("{}: line {line_no}: record rejected, missing or unknown label", path.display());
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        let id = match rec.get("example_id") {
            Some(Value::Number(x)) => format!("folio-{tag}-{x}"),
            Some(Value::String(x)) => format!("folio-{tag}-{x}"),
            _ => format!("folio-{tag}-L{line_no}"),
        };
        out.push(TaskExample::new(id, folio_question(&premises, conclusion), label, split));
    }
    Ok(out)
}

/// Load FOLIO from a directory holding `folio-train.jsonl` and `folio-validation.jsonl`.
pub fn load_folio(dir: &Path) -> Result<Loaded, TaskError> {
    let mut warnings = Vec::new();
    let train = folio_split(&dir.join("folio-train.jsonl"), Split::Train, &mut warnings)?;
    let validation = folio_split(&dir.join("folio-validation.jsonl"), Split::Validation, &mut warnings)?;
    let dataset = Dataset {
        task: TaskId::Folio,
        train,
        validation,
    };
    check_counts(&dataset, &mut warnings);
    Ok(Loaded { dataset, warnings })
}

fn target_of(rec: &Value) -> Option<String> {
    for key in ["targets", "target"] {
        match rec.get(key) {
            Some(Value::String(s)) => return Some(s.trim().to_string()),
            Some(Value::Array(xs)) => {
                if let Some(s) = xs.iter().find_map(Value::as_str) {
                    return Some(s.trim().to_string());
                }
            }
            _ => {}
        }
    }
    let scores = rec.get("target_scores")?.as_object()?;
    let mut best: Option<(&String, f64)> = None;
    for (k, v) in scores {
        let s = v.as_f64().unwrap_or(0.0);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k.trim().to_string())
}

fn input_of(rec: &Value) -> Option<String> {
    ["inputs", "input"]
        .iter()
        .find_map(|k| rec.get(*k).and_then(Value::as_str))
        .map(|s| s.trim().to_string())
}

fn bigbench_jsonl(path: &Path, task: TaskId, split: Split) -> Result<Vec<TaskExample>, TaskError> {
    let text = read(path)?;
    let tag = match split {
        Split::Train => "train",
        Split::Validation => "validation",
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TaskError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let q = input_of(&rec).ok_or_else(|| err("missing `inputs`".into()))?;
        let gold = target_of(&rec).ok_or_else(|| err("missing `targets`".into()))?;
        let idx = rec.get("idx").and_then(Value::as_u64).map_or(n as u64, |x| x);
        out.push(TaskExample::new(format!("{task}-{tag}-{idx}"), q, gold, split));
    }
    Ok(out)
}

fn bigbench_task_json(path: &Path, task: TaskId, prefix: &str) -> Result<(Vec<TaskExample>, Vec<TaskExample>), TaskError> {
    let text = read(path)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| TaskError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let examples = doc.get("examples").and_then(Value::as_array).ok_or_else(|| TaskError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "missing `examples` array".into(),
    })?;
    let n_val = examples.len() / 5;
    let n_train = examples.len() - n_val;
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (i, rec) in examples.iter().enumerate() {
        let err = |message: &str| TaskError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("example {i}: {message}"),
        };
        let q = input_of(rec).ok_or_else(|| err("missing `input`"))?;
        let gold = target_of(rec).ok_or_else(|| err("missing target"))?;
        let id = format!("{task}-{prefix}{i}");
        if i < n_train {
            train.push(TaskExample::new(id, q, gold, Split::Train));
        } else {
            validation.push(TaskExample::new(id, q, gold, Split::Validation));
        }
    }
    Ok((train, validation))
}

/// Load a BIG-bench task (`raco` or `tso`).
///
/// `path` may be a directory with `train.jsonl` and `validation.jsonl`, a
/// `task.json` file, or a directory whose `task.json` files (its own and
/// those of its immediate subdirectories, in name order) are concatenated.
pub fn load_bigbench(path: &Path, task: TaskId) -> Result<Loaded, TaskError> {
    if !matches!(task, TaskId::Raco | TaskId::Tso) {
        return Err(TaskError::Config(format!("`{task}` is not a BIG-bench task (expected raco or tso)")));
    }
    let mut warnings = Vec::new();
    let (train, validation) = if path.join("train.jsonl").is_file() {
        (
            bigbench_jsonl(&path.join("train.jsonl"), task, Split::Train)?,
            bigbench_jsonl(&path.join("validation.jsonl"), task, Split::Validation)?,
        )
    } else {
        let files = task_json_files(path)?;
        if files.is_empty() {
            return Err(TaskError::Config(format!("{}: no BIG-bench task files found", path.display())));
        }
        let (mut train, mut validation) = (Vec::new(), Vec::new());
        for (prefix, f) in files {
            let (t, v) = bigbench_task_json(&f, task, &prefix)?;
            train.extend(t);
            validation.extend(v);
        }
        (train, validation)
    };
    let dataset = Dataset { task, train, validation };
    check_counts(&dataset, &mut warnings);
    Ok(Loaded { dataset, warnings })
}

fn task_json_files(path: &Path) -> Result<Vec<(String, PathBuf)>, TaskError> {
    if path.is_file() {
        return Ok(vec![(String::new(), path.to_path_buf())]);
    }
    let io = |source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    if path.join("task.json").is_file() {
        files.push((String::new(), path.join("task.json")));
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("task.json").is_file())
        .collect();
    subdirs.sort();
    for d in subdirs {
        let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.push((format!("{name}-"), d.join("task.json")));
    }
    Ok(files)
}

/// Read a dataset written by [`save_examples`].
pub fn load_examples(dir: &Path, task: TaskId) -> Result<Loaded, TaskError> {
    let split = |name: &str| -> Result<Vec<TaskExample>, TaskError> {
        let path = dir.join(name);
        let text = read(&path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| TaskError::Parse {
                    path: path.clone(),
                    line: n + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    };
    Ok(Loaded {
        dataset: Dataset {
            task,
            train: split("train.jsonl")?,
            validation: split("validation.jsonl")?,
        },
        warnings: Vec::new(),
    })
}

/// Write `train.jsonl` and `validation.jsonl` of [`TaskExample`] records.
pub fn save_examples(dataset: &Dataset, dir: &Path) -> Result<(), TaskError> {
    fs::create_dir_all(dir).map_err(|source| TaskError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, xs) in [("train.jsonl", &dataset.train), ("validation.jsonl", &dataset.validation)] {
        let path = dir.join(name);
        let mut text = String::new();
        for x in xs {
            text.push_str(&serde_json::to_string(x).expect("example serializes"));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|source| TaskError::Io { path, source })?;
    }
    Ok(())
}

/// Load any supported task from `path`.
pub fn load_dataset(task: TaskId, path: &Path) -> Result<Loaded, TaskError> {
    match task {
        TaskId::Folio => load_folio(path),
        TaskId::Raco | TaskId::Tso => load_bigbench(path, task),
        TaskId::Synthetic => load_examples(path, task),
    }
}

pub const PLAYERS: [&str; 10] = ["Alice", "Bob", "Claire", "Dave", "Eve", "Fred", "Gertrude", "Helen", "Ian", "Jane"];
pub const COLORS: [&str; 10] = ["red", "blue", "green", "yellow", "purple", "orange", "white", "black", "pink", "brown"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_people: usize,
    pub n_swaps: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 40,
            n_validation: 20,
            n_people: 3,
            n_swaps: 3,
            seed: 0,
        }
    }
}

/// One generated game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthInstance {
    pub game: usize,
    /// Colour index held by each player at the start.
    pub initial: Vec<usize>,
    pub swaps: Vec<(usize, usize)>,
    /// Player asked about.
    pub target: usize,
}

impl SynthInstance {
    /// Colour index held by each player after all swaps.
    pub fn final_holdings(&self) -> Vec<usize> {
        let mut held = self.initial.clone();
        for &(a, b) in &self.swaps {
            held.swap(a, b);
        }
        held
    }

    pub fn answer_color(&self) -> usize {
        self.final_holdings()[self.target]
    }

    pub fn question(&self) -> String {
        let n = self.initial.len();
        let names = &PLAYERS[..n];
        let mut q = format!(
            "In Game #{}, {} and {} are playing a game. At the start of the game, each holds one ball: ",
            self.game,
            names[..n - 1].join(", "),
            names[n - 1]
        );
        let holdings: Vec<String> = (0..n).map(|p| format!("{} has a {} ball", names[p], COLORS[self.initial[p]])).collect();
        q.push_str(&holdings.join(", "));
        q.push('.');
        if !self.swaps.is_empty() {
            q.push_str(" Then pairs of players trade balls, in this order:");
            for (i, &(a, b)) in self.swaps.iter().enumerate() {
                q.push_str(&format!(" {}. {} and {} swap balls.", i + 1, names[a], names[b]));
            }
        }
        q.push_str(&format!(" At the end of the game, which ball does {} have?", names[self.target]));
        q
    }

    fn thoughts(&self, answer_color: usize) -> String {
        let n = self.initial.len();
        let mut held = self.initial.clone();
        let mut t = format!("Game #{} starts with ", self.game);
        let start: Vec<String> = (0..n).map(|p| format!("{} holding {}", PLAYERS[p], COLORS[held[p]])).collect();
        t.push_str(&start.join(", "));
        t.push('.');
        for &(a, b) in &self.swaps {
            held.swap(a, b);
            t.push_str(&format!(
                " After {} and {} swap, {} has {} and {} has {}.",
                PLAYERS[a], PLAYERS[b], PLAYERS[a], COLORS[held[a]], PLAYERS[b], COLORS[held[b]]
            ));
        }
        t.push_str(&format!(
            " So at the end of Game #{} {} has the {} ball.",
            self.game, PLAYERS[self.target], COLORS[answer_color]
        ));
        t
    }
}

fn answer_text(color: usize) -> String {
    format!("the {} ball.", COLORS[color])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthTask {
    pub dataset: Dataset,
    pub train_instances: Vec<SynthInstance>,
    pub validation_instances: Vec<SynthInstance>,
}

/// Generate the synthetic task deterministically from `cfg.seed`.
pub fn synth_tso(cfg: &SynthConfig) -> Result<SynthTask, TaskError> {
    if !(2..=PLAYERS.len()).contains(&cfg.n_people) {
        return Err(TaskError::Config(format!(
            "synthetic task supports 2 to {} players, got {}",
            PLAYERS.len(),
            cfg.n_people
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut make = |game: usize| {
        let mut colors: Vec<usize> = (0..COLORS.len()).collect();
        colors.shuffle(&mut rng);
        colors.truncate(cfg.n_people);
        let swaps = (0..cfg.n_swaps)
            .map(|_| {
                let a = rng.random_range(0..cfg.n_people);
                let b = (a + rng.random_range(1..cfg.n_people)) % cfg.n_people;
                (a, b)
            })
            .collect();
        SynthInstance {
            game,
            initial: colors,
            swaps,
            target: rng.random_range(0..cfg.n_people),
        }
    };
    let train_instances: Vec<SynthInstance> = (0..cfg.n_train).map(&mut make).collect();
    let validation_instances: Vec<SynthInstance> = (cfg.n_train..cfg.n_train + cfg.n_validation).map(&mut make).collect();
    let to_examples = |xs: &[SynthInstance], split: Split, tag: &str| -> Vec<TaskExample> {
        xs.iter()
            .enumerate()
            .map(|(i, inst)| TaskExample::new(format!("synth-{tag}-{i}"), inst.question(), answer_text(inst.answer_color()), split))
            .collect()
    };
    let dataset = Dataset {
        task: TaskId::Synthetic,
        train: to_examples(&train_instances, Split::Train, "train"),
        validation: to_examples(&validation_instances, Split::Validation, "val"),
    };
    Ok(SynthTask {
        dataset,
        train_instances,
        validation_instances,
    })
}

/// Whether the `p`-percent reasoner answers the `i`-th example of a split correctly.
///
/// Exactly `floor(n * p / 100)` of the first `n` examples are correct, spread evenly.
pub fn p_correct(i: usize, percent: u32) -> bool {
    let p = percent.min(100) as usize;
    (i + 1) * p / 100 > i * p / 100
}

/// Number of examples among the first `n` that [`p_correct`] marks correct.
pub fn p_correct_count(n: usize, percent: u32) -> usize {
    n * percent.min(100) as usize / 100
}

impl SynthTask {
    fn instances(&self) -> impl Iterator<Item = (usize, &SynthInstance, &TaskExample)> {
        self.train_instances
            .iter()
            .zip(&self.dataset.train)
            .enumerate()
            .map(|(i, (s, e))| (i, s, e))
            .chain(
                self.validation_instances
                    .iter()
                    .zip(&self.dataset.validation)
                    .enumerate()
                    .map(|(i, (s, e))| (i, s, e)),
            )
    }

    /// Rules for a reasoner that is always right.
    pub fn perfect_script(&self) -> Vec<ScriptRule> {
        self.script(|_, _| true)
    }

    /// Rules for a reasoner that is right exactly on the examples [`p_correct`] selects, per split.
    pub fn p_correct_script(&self, percent: u32) -> Vec<ScriptRule> {
        self.script(|i, _| p_correct(i, percent))
    }

    /// Agent-specific rules for `m` agents: on examples whose id is in
    /// `majority_right` a strict majority answers correctly, elsewhere every
    /// agent gives the same wrong answer.
    pub fn majority_script(&self, m: usize, majority_right: &HashSet<String>) -> Vec<ScriptRule> {
        let need = m / 2 + 1;
        let mut rules = Vec::new();
        for agent in 0..m {
            for (_, inst, ex) in self.instances() {
                let right = majority_right.contains(&ex.id) && agent < need;
                rules.extend(rules_for(inst, ex, right).into_iter().map(|r| r.for_agent(agent)));
            }
        }
        // Summarizer calls carry no agent index.
        for (_, inst, ex) in self.instances() {
            rules.extend(summarizer_rules(inst, ex, majority_right.contains(&ex.id)));
        }
        rules
    }

    fn script(&self, correct: impl Fn(usize, &TaskExample) -> bool) -> Vec<ScriptRule> {
        let mut rules = Vec::new();
        for (i, inst, ex) in self.instances() {
            let right = correct(i, ex);
            rules.extend(rules_for(inst, ex, right));
            rules.extend(summarizer_rules(inst, ex, right));
        }
        rules
    }
}

fn wrong_color(inst: &SynthInstance) -> usize {
    let held = inst.final_holdings();
    held[(inst.target + 1) % held.len()]
}

fn chosen_color(inst: &SynthInstance, right: bool) -> usize {
    if right {
        inst.answer_color()
    } else {
        wrong_color(inst)
    }
}

/// Direct, chain-of-thought and analogical rules for one example.
fn rules_for(inst: &SynthInstance, ex: &TaskExample, right: bool) -> Vec<ScriptRule> {
    let color = chosen_color(inst, right);
    let answer = answer_text(color);
    let thoughts = inst.thoughts(color);
    let q = &ex.question;
    vec![
        ScriptRule::exact(format!("Q: {q}\n{DIRECT_CUE}"), answer.clone()),
        ScriptRule::suffix(format!("Q: {q}\n{THINK_CUE}"), thoughts.clone()),
        ScriptRule::suffix(format!(" {thoughts}\n{ANSWER_CUE}"), answer.clone()),
        ScriptRule::substring(format!("# Initial Problem:\n{q}\n"), ap_completion(inst, q, &thoughts, color)),
    ]
}

fn summarizer_rules(inst: &SynthInstance, ex: &TaskExample, right: bool) -> Vec<ScriptRule> {
    let color = chosen_color(inst, right);
    let summary = format!(
        "Weighing the candidate solutions for Game #{}, the best supported answer is the {} ball.",
        inst.game, COLORS[color]
    );
    vec![
        ScriptRule::substring(format!("your best answer. {}\n", ex.question), summary.clone()),
        ScriptRule::suffix(format!(" {summary}\n{ANSWER_CUE}"), answer_text(color)),
    ]
}

fn ap_completion(inst: &SynthInstance, q: &str, thoughts: &str, color: usize) -> String {
    let mut out = String::from("## Relevant Problems:\n");
    for j in 0..3 {
        let (x, y) = (COLORS[(inst.game + j) % COLORS.len()], COLORS[(inst.game + j + 1) % COLORS.len()]);
        out.push_str(&format!(
            "Q: Practice {} for Game #{}: Ann holds a {x} ball and Ben holds a {y} ball. They swap. Which ball does Ann hold?\n\
             A: After one swap Ann holds Ben's ball. \\boxed{{the {y} ball.}}\n\n",
            j + 1,
            inst.game
        ));
    }
    out.push_str(&format!(
        "## Solve the Initial Problem:\nLet's solve the following reasoning problem.\nQ: {q}\nA: {thoughts} \\boxed{{{}}}",
        answer_text(color)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::answers_match;

    #[test]
    fn no_swaps_keeps_initial() {
        let inst = SynthInstance {
            game: 0,
            initial: vec![3, 1, 4],
            swaps: vec![],
            target: 2,
        };
        assert_eq!(inst.final_holdings(), vec![3, 1, 4]);
        assert!(!inst.question().contains("swap"));
    }

    #[test]
    fn single_swap_exchanges_pair() {
        let inst = SynthInstance {
            game: 0,
            initial: vec![0, 1, 2, 3],
            swaps: vec![(0, 2)],
            target: 0,
        };
        assert_eq!(inst.final_holdings(), vec![2, 1, 0, 3]);
    }

    #[test]
    fn deterministic_generation() {
        let cfg = SynthConfig::default();
        assert_eq!(synth_tso(&cfg).unwrap(), synth_tso(&cfg).unwrap());
        let other = synth_tso(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(other.dataset, synth_tso(&cfg).unwrap().dataset);
    }

    #[test]
    fn player_count_is_checked() {
        assert!(synth_tso(&SynthConfig { n_people: 1, ..Default::default() }).is_err());
        assert!(synth_tso(&SynthConfig { n_people: 11, ..Default::default() }).is_err());
    }

    #[test]
    fn p_correct_fraction_is_exact() {
        for p in [0, 25, 50, 80, 100] {
            for n in [0, 1, 7, 20, 200] {
                assert_eq!((0..n).filter(|&i| p_correct(i, p)).count(), p_correct_count(n, p));
            }
        }
    }

    #[test]
    fn gold_answers_canonicalize_to_a_color() {
        let t = synth_tso(&SynthConfig::default()).unwrap();
        for ex in t.dataset.train.iter().chain(&t.dataset.validation) {
            let c = TaskId::Synthetic.canonicalize(&ex.gold_answer);
            assert!(COLORS.contains(&c.as_str()), "{c}");
        }
    }

    #[test]
    fn wrong_answers_are_wrong() {
        let t = synth_tso(&SynthConfig { n_people: 2, ..Default::default() }).unwrap();
        for (inst, ex) in t.train_instances.iter().zip(&t.dataset.train) {
            assert!(!answers_match(TaskId::Synthetic, &answer_text(wrong_color(inst)), &ex.gold_answer));
        }
    }

    #[test]
    fn folio_labels() {
        assert_eq!(folio_label("Uncertain"), Some("Unknown"));
        assert_eq!(folio_label(" true "), Some("True"));
        assert_eq!(folio_label("maybe"), None);
    }
}
