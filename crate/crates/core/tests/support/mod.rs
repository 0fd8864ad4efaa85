//! Independent oracles shared by the integration tests and the acceptance suite.
//!
//! Each `check_*` function returns a short summary on success and a
//! description of the first discrepancy otherwise.

#![allow(dead_code)]

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mamr_core::combo::{AgentTopology, Aggregation, MemoryMode, MethodCombo, ReasoningStyle};
use mamr_core::gateway::{BackendError, Gateway, GenerationRequest, MockEmbedder, ScriptedBackend, TextBackend};
use mamr_core::memory::{self, BankKind, MemoryBank, RetrievalSpec, TrainerConfig};
use mamr_core::orchestrate::{plurality_vote, ExampleContext};
use mamr_core::prompting::{render_ap, render_direct, render_ncot, render_summarizer, render_zcot};
use mamr_core::runner::{self, enumerate_matrix, ExecuteOptions, Family, FrozenBank};
use mamr_core::tasks::{self, SynthConfig, SynthTask, COLORS, PLAYERS};
use mamr_core::{Exemplar, Provenance, Split, TaskExample, TaskId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn goldens_dir() -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let local = here.join("tests/goldens/prompts");
    if local.is_dir() {
        local
    } else {
        here.join("../core/tests/goldens/prompts")
    }
}

pub const TOY_QUESTION: &str =
    "Alice has the red ball and Bob has the blue ball. They swap balls. Which ball does Alice have?";

fn exemplar(id: &str, q: &str, cot: &str, a: &str, provenance: Provenance, seq: u64) -> Exemplar {
    Exemplar {
        id: id.into(),
        question: q.into(),
        chain_of_thought: cot.into(),
        answer: a.into(),
        embedding: None,
        provenance,
        source_example_id: None,
        created_seq: seq,
    }
}

/// Rendered prompt text for every golden file name.
fn rendered_prompts() -> Vec<(&'static str, String)> {
    let stage1 = vec!["  After the swap Alice holds Bob's ball, which is blue.\n".to_string()];
    let e1 = exemplar(
        "e1",
        "Carol has a green hat. Does Carol have a hat?",
        "Carol has a green hat, so she has a hat.",
        "Yes",
        Provenance::LearnedNcot,
        0,
    );
    let e2 = exemplar("e2", "What is 2 plus 3?", "2 plus 3 is 5.", "5", Provenance::LearnedNcot, 1);
    let ap_mem = exemplar(
        "ap1",
        "Dan has a cup. He gives it to Eve. Who has the cup?",
        "Q: Dan has a cup. He gives it to Eve. Who has the cup?\nA: Dan gave the cup away, so Eve has it. \\boxed{Eve}",
        "Eve",
        Provenance::LearnedAp,
        0,
    );
    let direct = render_direct(TOY_QUESTION).unwrap();
    let zcot = render_zcot(TOY_QUESTION).unwrap();
    let ncot = render_ncot(&[&e1, &e2], TOY_QUESTION).unwrap();
    let ap = render_ap(TOY_QUESTION, None).unwrap();
    let ap_memory = render_ap(TOY_QUESTION, Some(&[&ap_mem, &e2])).unwrap();
    let summ = render_summarizer(TOY_QUESTION, &["Alice ends with the blue ball.", "Alice keeps the red ball."]).unwrap();
    let summ_stage1 = vec![" Most candidates say blue. ".to_string()];
    vec![
        ("direct.txt", direct.prompt_for(0, &[]).unwrap()),
        ("zcot.stage1.txt", zcot.prompt_for(0, &[]).unwrap()),
        ("zcot.stage2.txt", zcot.prompt_for(1, &stage1).unwrap()),
        ("ncot.stage1.txt", ncot.prompt_for(0, &[]).unwrap()),
        ("ncot.stage2.txt", ncot.prompt_for(1, &stage1).unwrap()),
        ("ap.txt", ap.prompt_for(0, &[]).unwrap()),
        ("ap_memory.txt", ap_memory.prompt_for(0, &[]).unwrap()),
        ("summarizer.stage1.txt", summ.prompt_for(0, &[]).unwrap()),
        ("summarizer.stage2.txt", summ.prompt_for(1, &summ_stage1).unwrap()),
    ]
}

pub fn check_prompt_goldens() -> Check {
    let dir = goldens_dir();
    let prompts = rendered_prompts();
    for (name, text) in &prompts {
        let path = dir.join(name);
        let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if &golden != text {
            let at = golden.bytes().zip(text.bytes()).take_while(|(a, b)| a == b).count();
            return Err(format!("{name} differs from its golden at byte {at}"));
        }
    }
    Ok(format!("{} prompts byte-identical", prompts.len()))
}

/// Hand-built (task, raw answer, canonical form) cases.
pub const CANON_CORPUS: &[(TaskId, &str, &str)] = &[
    (TaskId::Folio, "The conclusion is True.", "true"),
    (TaskId::Folio, "Unknown", "unknown"),
    (TaskId::Folio, "", ""),
    (TaskId::Folio, "   \t\n", ""),
    (TaskId::Folio, "FALSE", "false"),
    (TaskId::Folio, "so the statement is false!!", "false"),
    (TaskId::Folio, "It cannot be determined, so: Unknown.", "unknown"),
    (TaskId::Folio, "\"True\"", "true"),
    (TaskId::Folio, "The answer is (True)", "true"),
    (TaskId::Folio, "True\n\nExplanation follows below", "below"),
    (TaskId::Raco, "The answer is 3 objects.", "3"),
    (TaskId::Raco, "there are two such items", "2"),
    (TaskId::Raco, "Blue, I believe.", "blue"),
    (TaskId::Raco, "", ""),
    (TaskId::Raco, "Zero", "0"),
    (TaskId::Raco, "twenty things", "20"),
    (TaskId::Raco, "I count eleven, not 12", "12"),
    (TaskId::Raco, "(A) purple", "a"),
    (TaskId::Raco, "forty-two", "2"),
    (TaskId::Raco, "There are 007 items", "007"),
    (TaskId::Raco, "no numbers here", "no"),
    (TaskId::Tso, "Alice has the yellow ball.", "alice yellow"),
    (TaskId::Tso, "the white present", "white"),
    (TaskId::Tso, "purple", "purple"),
    (TaskId::Tso, "", ""),
    (TaskId::Tso, "The Red Ball.", "red"),
    (TaskId::Tso, "At the end of the dance, Alice is dancing with Bob.", "alice bob"),
    (TaskId::Tso, "Bob is playing goalkeeper", "bob goalkeeper"),
    (TaskId::Tso, "the   black    ball", "black"),
    (TaskId::Tso, "Ophelia.", "ophelia"),
    (TaskId::Tso, "Claire has the orange present!", "claire orange"),
    (TaskId::Tso, "theball", "theball"),
    (TaskId::Synthetic, "the green ball.", "green"),
    (TaskId::Synthetic, "Dave has the pink ball", "dave pink"),
];

pub fn check_canon_corpus() -> Check {
    for (task, raw, want) in CANON_CORPUS {
        let got = task.canonicalize(raw);
        if got != *want {
            return Err(format!("{task}: {raw:?} gave {got:?}, expected {want:?}"));
        }
    }
    Ok(format!("{} corpus cases", CANON_CORPUS.len()))
}

const FUZZ_WORDS: &[&str] = &[
    "at", "the", "end", "of", "has", "is", "playing", "dancing", "with", "ball", "present", "true", "false",
    "unknown", "one", "two", "three", "twelve", "twenty", "Alice", "Bob", "red", "blue",
];
const FUZZ_CHARS: &[u8] = b"abcXYZ019 .,!?;:'\"()-\t\n";

/// Random strings built from task vocabulary, ASCII letters, digits, punctuation and whitespace.
pub fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    let parts = rng.random_range(0..12);
    let mut s = String::new();
    for _ in 0..parts {
        if rng.random_bool(0.5) {
            let w = FUZZ_WORDS[rng.random_range(0..FUZZ_WORDS.len())];
            match rng.random_range(0..3) {
                0 => s.push_str(w),
                1 => s.push_str(&w.to_uppercase()),
                _ => {
                    let mut c = w.chars();
                    if let Some(f) = c.next() {
                        s.extend(f.to_uppercase());
                        s.push_str(c.as_str());
                    }
                }
            }
        } else {
            for _ in 0..rng.random_range(1..4) {
                s.push(FUZZ_CHARS[rng.random_range(0..FUZZ_CHARS.len())] as char);
            }
        }
        if rng.random_bool(0.6) {
            s.push(' ');
        }
    }
    s
}

pub fn check_canon_fuzz(per_task: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for task in [TaskId::Folio, TaskId::Raco, TaskId::Tso] {
        for _ in 0..per_task {
            let s = fuzz_string(&mut rng);
            let c = task.canonicalize(&s);
            if task.canonicalize(&c) != c {
                return Err(format!("{task}: not idempotent on {s:?} ({c:?})"));
            }
            if task.canonicalize(&s.to_uppercase()) != c || task.canonicalize(&s.to_lowercase()) != c {
                return Err(format!("{task}: case-sensitive on {s:?}"));
            }
        }
    }
    Ok(format!("{per_task} fuzzed strings per task"))
}

/// Brute-force plurality: highest count, ties to the earliest first occurrence.
pub fn brute_force_mode(xs: &[String]) -> (String, usize) {
    let mut best: Option<(usize, usize)> = None;
    for (i, x) in xs.iter().enumerate() {
        if xs[..i].contains(x) {
            continue;
        }
        let count = xs.iter().filter(|y| *y == x).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((i, count));
        }
    }
    let (i, _) = best.expect("non-empty");
    (xs[i].clone(), i)
}

pub fn check_vote_oracle(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ties = 0;
    for n in 0..cases {
        let len = rng.random_range(1..=12);
        let alphabet = rng.random_range(1..=5);
        let xs: Vec<String> = (0..len).map(|_| format!("a{}", rng.random_range(0..alphabet))).collect();
        let (want, idx) = brute_force_mode(&xs);
        let got = plurality_vote(&xs).map_err(|e| e.to_string())?;
        if got.winner != want || got.first_index != idx {
            return Err(format!("case {n}: {xs:?} gave {} expected {want}", got.winner));
        }
        let top = got.tallies.iter().map(|t| t.count).max().unwrap_or(0);
        if got.tallies.iter().filter(|t| t.count == top).count() > 1 {
            ties += 1;
        }
    }
    if plurality_vote::<String>(&[]).is_ok() {
        return Err("empty multiset did not fail".into());
    }
    Ok(format!("{cases} multisets ({ties} with ties)"))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 2.0;
    }
    1.0 - dot / (na.sqrt() * nb.sqrt())
}

/// Compare similar-mode retrieval to a full sort on random banks of mock embeddings.
pub fn check_knn_oracle(banks: usize, seed: u64) -> Check {
    let embed = MockEmbedder::new(16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = 0;
    for b in 0..banks {
        let size = rng.random_range(1..=200);
        let mut bank = MemoryBank::new(TaskId::Synthetic, "mock", BankKind::LearnedNcot);
        for i in 0..size {
            // Some exemplars share text, hence embeddings, to exercise tie-breaking.
            let text = if i > 0 && rng.random_bool(0.1) {
                bank.exemplars()[rng.random_range(0..i)].question.clone()
            } else {
                format!("question {} {}", rng.random::<u32>(), FUZZ_WORDS[rng.random_range(0..FUZZ_WORDS.len())])
            };
            let source = format!("src-{}", rng.random_range(0..size));
            bank.append(format!("x{i}"), text.clone(), "thoughts".into(), "a".into(), Some(embed.embed_text(&text)), Some(source))
                .map_err(|e| e.to_string())?;
        }
        for _ in 0..3 {
            queries += 1;
            let qtext = format!("query {}", rng.random::<u32>());
            let qid = format!("src-{}", rng.random_range(0..size));
            let query = TaskExample::new(qid.clone(), qtext.clone(), "a", Split::Validation);
            let qemb = embed.embed_text(&qtext);
            let k = rng.random_range(1..=20);
            let got: Vec<String> = memory::retrieve(&bank, &RetrievalSpec::similar(k), &query, Some(&qemb), 0)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|e| e.id.clone())
                .collect();
            let mut all: Vec<(f64, u64, String)> = bank
                .exemplars()
                .iter()
                .filter(|e| e.source_example_id.as_deref() != Some(qid.as_str()))
                .map(|e| (cosine(&qemb, e.embedding.as_ref().unwrap()), e.created_seq, e.id.clone()))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<String> = all.into_iter().take(k).map(|t| t.2).collect();
            if got != want {
                return Err(format!("bank {b} (size {size}), K={k}: got {got:?}, expected {want:?}"));
            }
        }
    }
    Ok(format!("{banks} banks, {queries} queries, 0 mismatches"))
}

pub fn synth(n_train: usize, n_validation: usize) -> SynthTask {
    tasks::synth_tso(&SynthConfig {
        n_train,
        n_validation,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn scripted_gateway(rules: Vec<mamr_core::gateway::ScriptRule>, name: &str) -> Gateway {
    let backend = ScriptedBackend::new(rules, "I am not sure.").unwrap().with_name(name);
    Gateway::new(Arc::new(backend)).with_embedder(Arc::new(MockEmbedder::new(16)))
}

/// Frozen bank built against a p-correct reasoner holds exactly the examples it gets right.
pub fn check_frozen_subset(percent: u32) -> Check {
    let task = synth(40, 5);
    let gw = scripted_gateway(task.p_correct_script(percent), "p");
    let report = memory::build_frozen(&task.dataset.train, &gw, TaskId::Synthetic, 256).map_err(|e| e.to_string())?;
    let got: Vec<&str> = report
        .bank
        .exemplars()
        .iter()
        .map(|e| e.source_example_id.as_deref().unwrap_or(""))
        .collect();
    let want: Vec<&str> = task
        .dataset
        .train
        .iter()
        .enumerate()
        .filter(|(i, _)| (i + 1) * percent as usize / 100 > i * percent as usize / 100)
        .map(|(_, e)| e.id.as_str())
        .collect();
    if got != want {
        return Err(format!("frozen bank {got:?} != correct subset {want:?}"));
    }
    if report.bank.exemplars().iter().any(|e| e.provenance != Provenance::FrozenZcot) {
        return Err("frozen bank holds non-frozen provenance".into());
    }
    let calls = gw.ledger().snapshot().training_calls;
    if calls != 80 {
        return Err(format!("frozen build made {calls} calls, expected 80"));
    }
    Ok(format!("{} of 40 kept at {percent}%", got.len()))
}

/// Learned few-shot training starts zero-shot and adds one shot per stored exemplar up to K.
pub fn check_cold_start_ramp() -> Check {
    let task = synth(5, 1);
    let gw = scripted_gateway(task.perfect_script(), "perfect");
    let cfg = TrainerConfig {
        agents: AgentTopology::Greedy,
        m: 1,
        k: 3,
        retrieval: memory::RetrievalMode::Random,
        max_tokens: 256,
        seed: 11,
    };
    let report = memory::train_learned_ncot(&task.dataset.train, &gw, TaskId::Synthetic, &cfg).map_err(|e| e.to_string())?;
    let shots: Vec<usize> = report.steps.iter().map(|s| s.shots[0]).collect();
    let mut bank_size = 0usize;
    let want: Vec<usize> = report
        .steps
        .iter()
        .map(|s| {
            let n = bank_size.min(3);
            bank_size += s.appended;
            n
        })
        .collect();
    if shots != want || shots != [0, 1, 2, 3, 3] {
        return Err(format!("shots {shots:?}, expected {want:?}"));
    }
    Ok(format!("shots {shots:?}"))
}

/// Closed-form call counts, written out per style.
pub fn closed_form(c: &MethodCombo, nt: u64, nv: u64, r: u64) -> (u64, u64, u64) {
    let m = c.m as u64;
    let per_call = match c.style {
        ReasoningStyle::Direct | ReasoningStyle::Ap | ReasoningStyle::ApMemory => 1,
        ReasoningStyle::Zcot | ReasoningStyle::Ncot => 2,
    };
    let mut validation = per_call * m * nv * r;
    if c.aggregation == Aggregation::Summarizer {
        validation += 2 * nv * r;
    }
    let (training, stored) = match c.memory {
        MemoryMode::None => (0, 0),
        MemoryMode::FrozenFixed | MemoryMode::FrozenRandom => (2 * nt, nt),
        MemoryMode::LearnedRandom | MemoryMode::LearnedSimilar => {
            if c.style == ReasoningStyle::ApMemory {
                (m * nt * r, m * c.k as u64 * nt * r)
            } else {
                (2 * m * nt * r, m * nt * r)
            }
        }
    };
    (training, validation, stored)
}

/// Run every family on the synthetic task and compare ledgers with the closed form.
pub fn check_compute_model(runs: usize) -> Check {
    let (nt, nv) = (40u64, 20u64);
    let task = synth(nt as usize, nv as usize);
    let gw = scripted_gateway(task.p_correct_script(80), "scripted:p80");
    let build = gw.with_fresh_ledger();
    let report = memory::build_frozen(&task.dataset.train, &build, TaskId::Synthetic, 256).map_err(|e| e.to_string())?;
    let frozen = FrozenBank {
        bank: report.bank,
        build_ledger: Some(build.ledger().snapshot()),
    };
    let opts = ExecuteOptions {
        runs,
        master_seed: 3,
        max_tokens: 256,
        record_traces: false,
    };
    let mut checked = 0;
    for family in Family::ALL {
        let combos = enumerate_matrix(family, 10, 3);
        let reports = runner::execute(&combos, &task.dataset, &gw, Some(&frozen), &opts).map_err(|e| e.to_string())?;
        let mut vote_validation = std::collections::HashMap::new();
        for rep in &reports {
            let c = &rep.stats.combo;
            let (t, v, s) = closed_form(c, nt, nv, runs as u64);
            let check = &rep.check;
            if !check.passed()
                || check.training_calls != t
                || check.validation_calls != v
                || check.predicted.training_calls != t
                || check.predicted.validation_calls != v
                || check.predicted.max_exemplars_stored != s
                || check.exemplars_stored > s
            {
                return Err(format!("{family} {c}: {check} vs closed form ({t}, {v}, {s})"));
            }
            if c.aggregation == Aggregation::Vote {
                vote_validation.insert((c.style, c.agents, c.memory), v);
            }
            checked += 1;
        }
        for rep in &reports {
            let c = &rep.stats.combo;
            if c.aggregation == Aggregation::Summarizer {
                let base = vote_validation
                    .get(&(c.style, c.agents, c.memory))
                    .ok_or_else(|| format!("{c} has no vote counterpart"))?;
                if rep.check.validation_calls - base != 2 * nv * runs as u64 {
                    return Err(format!("{c}: summarizer delta is not two calls per example"));
                }
            }
        }
    }
    Ok(format!("{checked} combinations matched"))
}

/// Majority-correct agents on exactly the ids in S give vote accuracy |S| / Nv.
pub fn check_majority_accuracy() -> Check {
    let task = synth(10, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ids: Vec<String> = task.dataset.validation.iter().map(|e| e.id.clone()).collect();
    ids.shuffle(&mut rng);
    let s: HashSet<String> = ids.into_iter().take(13).collect();
    let m = 5;
    let gw = scripted_gateway(task.majority_script(m, &s), "majority");
    let combos = vec![
        MethodCombo::new(ReasoningStyle::Direct, AgentTopology::Sc, m, 0, MemoryMode::None, Aggregation::Vote),
        MethodCombo::new(ReasoningStyle::Zcot, AgentTopology::Sc, m, 0, MemoryMode::None, Aggregation::Vote),
        MethodCombo::new(ReasoningStyle::Ap, AgentTopology::Sc, m, 0, MemoryMode::None, Aggregation::Vote),
        MethodCombo::new(ReasoningStyle::Zcot, AgentTopology::Sc, m, 0, MemoryMode::None, Aggregation::Summarizer),
    ];
    let want = s.len() as f64 / task.dataset.validation.len() as f64;
    for combo in &combos {
        let ctx = ExampleContext {
            combo: *combo,
            task: TaskId::Synthetic,
            gateway: &gw,
            bank: None,
            run_seed: 1,
            max_tokens: 256,
        };
        let mut correct = 0;
        for ex in &task.dataset.validation {
            let out = ctx.run_example(ex).map_err(|e| e.to_string())?;
            if out.correct != s.contains(&ex.id) {
                return Err(format!("{combo}: {} correct={} but membership={}", ex.id, out.correct, s.contains(&ex.id)));
            }
            correct += usize::from(out.correct);
        }
        let acc = correct as f64 / task.dataset.validation.len() as f64;
        if acc != want {
            return Err(format!("{combo}: accuracy {acc} != {want}"));
        }
    }
    Ok(format!("accuracy {want} = |S|/Nv on {} combinations", combos.len()))
}

pub fn check_error_bars() -> Check {
    let (mean, two_sigma) = runner::error_bars(&[0.4, 0.6]).map_err(|e| e.to_string())?;
    let want = 2.0 * (0.02f64).sqrt();
    if (mean - 0.5).abs() > 1e-12 || (two_sigma - want).abs() > 1e-12 {
        return Err(format!("({mean}, {two_sigma}) != (0.5, {want})"));
    }
    Ok(format!("(0.5, {two_sigma:.12})"))
}

/// Scripted answers, except that sampled calls whose seed is divisible by three get a wrong answer.
struct SeedSensitive(ScriptedBackend);

impl TextBackend for SeedSensitive {
    fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        if req.params.seed.is_some_and(|s| s % 3 == 0) {
            return Ok("the unknown ball.".into());
        }
        self.0.complete(req)
    }

    fn model_name(&self) -> String {
        self.0.model_name()
    }
}

/// Six replications: distinct run seeds, and summary statistics recomputed from per-run accuracies.
pub fn check_six_runs() -> Check {
    let task = synth(10, 20);
    let backend = ScriptedBackend::new(task.p_correct_script(70), "I am not sure.").map_err(|e| e.to_string())?;
    let gw = Gateway::new(Arc::new(SeedSensitive(backend)));
    let combo = MethodCombo::new(ReasoningStyle::Direct, AgentTopology::Sc, 3, 0, MemoryMode::None, Aggregation::Vote);
    let opts = ExecuteOptions {
        runs: 6,
        master_seed: 42,
        max_tokens: 256,
        record_traces: false,
    };
    let reports = runner::execute(&[combo], &task.dataset, &gw, None, &opts).map_err(|e| e.to_string())?;
    let rep = &reports[0];
    if rep.runs.len() != 6 || rep.stats.runs != 6 {
        return Err(format!("{} runs recorded", rep.runs.len()));
    }
    let seeds: HashSet<u64> = rep.runs.iter().map(|r| r.run_seed).collect();
    if seeds.len() != 6 {
        return Err("run seeds are not distinct".into());
    }
    let accs: Vec<f64> = rep.runs.iter().map(|r| r.accuracy).collect();
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let two_sigma = 2.0 * var.sqrt();
    if (rep.stats.mean_accuracy - mean).abs() > 1e-12 || (rep.stats.two_sigma - two_sigma).abs() > 1e-12 {
        return Err(format!("stats ({}, {}) != ({mean}, {two_sigma})", rep.stats.mean_accuracy, rep.stats.two_sigma));
    }
    if !rep.check.passed() {
        return Err(format!("ledger check failed: {}", rep.check));
    }
    if two_sigma == 0.0 {
        return Err("runs did not vary, so the spread was not exercised".into());
    }
    Ok(format!("R=6 mean {:.3} two_sigma {:.3}", mean, two_sigma))
}

/// Re-derive the answer of a synthetic question by parsing its text and replaying the swaps.
pub fn simulate_question(q: &str) -> Option<String> {
    let start = q.find("each holds one ball: ")? + "each holds one ball: ".len();
    let rest = &q[start..];
    let end = rest.find('.')?;
    let mut names = Vec::new();
    let mut held = Vec::new();
    for part in rest[..end].split(", ") {
        let (name, ball) = part.split_once(" has a ")?;
        names.push(name.to_string());
        held.push(ball.strip_suffix(" ball")?.to_string());
    }
    let idx = |n: &str| names.iter().position(|x| x == n);
    let mut tail = &rest[end + 1..];
    while let Some(p) = tail.find(" swap balls.") {
        let clause = &tail[..p];
        let clause = clause.rsplit_once(". ").map_or(clause, |(_, c)| c);
        let (a, b) = clause.trim().split_once(" and ")?;
        let (a, b) = (idx(a.trim())?, idx(b.trim())?);
        held.swap(a, b);
        tail = &tail[p + " swap balls.".len()..];
    }
    let who = q.rsplit_once("which ball does ")?.1.strip_suffix(" have?")?;
    Some(held[idx(who)?].clone())
}

pub fn check_synth_simulator(n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut done = 0;
    while done < n {
        let cfg = SynthConfig {
            n_train: 50,
            n_validation: 50,
            n_people: rng.random_range(2..=PLAYERS.len()),
            n_swaps: rng.random_range(0..8),
            seed: rng.random(),
        };
        let task = tasks::synth_tso(&cfg).map_err(|e| e.to_string())?;
        for ex in task.dataset.train.iter().chain(&task.dataset.validation) {
            let color = simulate_question(&ex.question).ok_or_else(|| format!("cannot parse {:?}", ex.question))?;
            if !COLORS.contains(&color.as_str()) {
                return Err(format!("unknown colour {color}"));
            }
            if TaskId::Synthetic.canonicalize(&ex.gold_answer) != color {
                return Err(format!("{}: gold {:?} but simulation gives {color}", ex.id, ex.gold_answer));
            }
            done += 1;
        }
    }
    Ok(format!("{done} instances re-simulated"))
}
