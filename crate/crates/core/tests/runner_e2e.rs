mod support;

use mamr_core::combo::{AgentTopology, Aggregation, MemoryMode, MethodCombo, ReasoningStyle};
use mamr_core::runner::{self, ExecuteOptions};
use mamr_core::tasks::p_correct_count;

fn opts(runs: usize, record_traces: bool) -> ExecuteOptions {
    ExecuteOptions {
        runs,
        master_seed: 7,
        max_tokens: 256,
        record_traces,
    }
}

fn greedy(style: ReasoningStyle) -> MethodCombo {
    MethodCombo::new(style, AgentTopology::Greedy, 1, 0, MemoryMode::None, Aggregation::Vote)
}

#[test]
fn p_correct_reasoner_scores_exactly_p() {
    let task = support::synth(10, 20);
    for p in [0, 45, 80, 100] {
        let gw = support::scripted_gateway(task.p_correct_script(p), "p");
        let combos = [greedy(ReasoningStyle::Direct), greedy(ReasoningStyle::Zcot), greedy(ReasoningStyle::Ap)];
        let reports = runner::execute(&combos, &task.dataset, &gw, None, &opts(1, false)).unwrap();
        let want = p_correct_count(20, p) as f64 / 20.0;
        for r in &reports {
            assert_eq!(r.stats.mean_accuracy, want, "{} at {p}%", r.stats.combo);
            assert!(r.check.passed());
        }
    }
}

#[test]
fn learned_memory_with_perfect_reasoner() {
    let task = support::synth(12, 6);
    let gw = support::scripted_gateway(task.perfect_script(), "perfect");
    let combos = [
        MethodCombo::new(ReasoningStyle::Ncot, AgentTopology::Sc, 3, 2, MemoryMode::LearnedSimilar, Aggregation::Vote),
        MethodCombo::new(ReasoningStyle::ApMemory, AgentTopology::Sc, 3, 2, MemoryMode::LearnedRandom, Aggregation::Summarizer),
    ];
    let reports = runner::execute(&combos, &task.dataset, &gw, None, &opts(2, false)).unwrap();
    for r in &reports {
        assert_eq!(r.stats.mean_accuracy, 1.0);
        assert_eq!(r.stats.two_sigma, 0.0);
        assert!(r.check.passed(), "{}", r.check);
        assert!(r.runs.iter().all(|run| run.bank_size.is_some()));
    }
    assert_eq!(reports[0].runs[0].bank_size, Some(36));
    assert_eq!(reports[1].runs[0].bank_size, Some(72));
}

#[test]
fn outputs_are_reproducible_and_traces_optional() {
    let task = support::synth(8, 5);
    let combos = [greedy(ReasoningStyle::Zcot), greedy(ReasoningStyle::Direct)];
    let write = |record: bool| {
        let gw = support::scripted_gateway(task.p_correct_script(60), "p60");
        let dir = tempfile::tempdir().unwrap();
        let reports = runner::execute(&combos, &task.dataset, &gw, None, &opts(2, record)).unwrap();
        let (csv, jsonl) = runner::write_results(&reports, dir.path()).unwrap();
        (std::fs::read_to_string(csv).unwrap(), std::fs::read_to_string(jsonl).unwrap())
    };
    let a = write(false);
    let b = write(false);
    assert_eq!(a, b);
    assert!(!a.1.contains("\"prompts\""));
    let traced = write(true);
    assert!(traced.1.contains("\"prompts\""));
    assert_eq!(traced.0, a.0);
    let lines: Vec<&str> = a.0.lines().collect();
    assert_eq!(lines[0], "task,model,style,agents,M,K,memory,aggregation,mean,two_sigma,R,failures");
    assert!(lines[1].starts_with("synth,p60,direct,"), "{}", lines[1]);
    assert_eq!(a.1.lines().count(), 4);
}

#[test]
fn missing_frozen_bank_is_reported_before_any_call() {
    let task = support::synth(4, 2);
    let gw = support::scripted_gateway(task.perfect_script(), "perfect");
    let combo = MethodCombo::new(ReasoningStyle::Ncot, AgentTopology::Sc, 3, 2, MemoryMode::FrozenRandom, Aggregation::Vote);
    assert!(runner::execute(&[combo], &task.dataset, &gw, None, &opts(1, false)).is_err());
    assert_eq!(gw.ledger().total_generation_calls(), 0);
}
