use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{CallTag, Phase};

/// Thread-safe generation/embedding call counters.
///
/// Counters only ever increase, and totals are sums of independent atomics,
/// so the final counts do not depend on how concurrent calls interleave.
#[derive(Debug, Default)]
pub struct CallLedger {
    buckets: [[AtomicU64; CallTag::COUNT]; 2],
    embedding_calls: AtomicU64,
    failed_calls: AtomicU64,
}

impl CallLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, phase: Phase, tag: CallTag) {
        self.buckets[phase.index()][tag.index()].fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_embedding(&self) {
        self.embedding_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_failure(&self) {
        self.failed_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count(&self, phase: Phase, tag: CallTag) -> u64 {
        self.buckets[phase.index()][tag.index()].load(Ordering::Relaxed)
    }

    pub fn phase_total(&self, phase: Phase) -> u64 {
        CallTag::ALL.iter().map(|t| self.count(phase, *t)).sum()
    }

    pub fn total_generation_calls(&self) -> u64 {
        self.phase_total(Phase::Training) + self.phase_total(Phase::Validation)
    }

    pub fn embedding_calls(&self) -> u64 {
        self.embedding_calls.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let bucket_map = |phase: Phase| {
            CallTag::ALL
                .iter()
                .filter_map(|t| {
                    let n = self.count(phase, *t);
                    (n > 0).then(|| (t.as_str().to_string(), n))
                })
                .collect::<BTreeMap<_, _>>()
        };
        LedgerSnapshot {
            training: bucket_map(Phase::Training),
            validation: bucket_map(Phase::Validation),
            training_calls: self.phase_total(Phase::Training),
            validation_calls: self.phase_total(Phase::Validation),
            total_generation_calls: self.total_generation_calls(),
            total_embedding_calls: self.embedding_calls(),
            failed_calls: self.failed_calls.load(Ordering::Relaxed),
        }
    }
}

/// Serializable point-in-time copy of a [`CallLedger`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub training: BTreeMap<String, u64>,
    pub validation: BTreeMap<String, u64>,
    pub training_calls: u64,
    pub validation_calls: u64,
    pub total_generation_calls: u64,
    pub total_embedding_calls: u64,
    pub failed_calls: u64,
}

impl LedgerSnapshot {
    /// Counts accumulated since `earlier` was taken from the same ledger.
    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        let diff = |now: &BTreeMap<String, u64>, then: &BTreeMap<String, u64>| {
            now.iter()
                .filter_map(|(k, v)| {
                    let d = v - then.get(k).copied().unwrap_or(0);
                    (d > 0).then(|| (k.clone(), d))
                })
                .collect()
        };
        LedgerSnapshot {
            training: diff(&self.training, &earlier.training),
            validation: diff(&self.validation, &earlier.validation),
            training_calls: self.training_calls - earlier.training_calls,
            validation_calls: self.validation_calls - earlier.validation_calls,
            total_generation_calls: self.total_generation_calls - earlier.total_generation_calls,
            total_embedding_calls: self.total_embedding_calls - earlier.total_embedding_calls,
            failed_calls: self.failed_calls - earlier.failed_calls,
        }
    }

    pub fn merge(&mut self, other: &LedgerSnapshot) {
        for (k, v) in &other.training {
            *self.training.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.validation {
            *self.validation.entry(k.clone()).or_default() += v;
        }
        self.training_calls += other.training_calls;
        self.validation_calls += other.validation_calls;
        self.total_generation_calls += other.total_generation_calls;
        self.total_embedding_calls += other.total_embedding_calls;
        self.failed_calls += other.failed_calls;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_total_counts_both_calls() {
        let ledger = CallLedger::new();
        for _ in 0..3 {
            ledger.record(Phase::Validation, CallTag::ReasonCall);
            ledger.record(Phase::Validation, CallTag::AnswerCall);
        }
        assert_eq!(ledger.phase_total(Phase::Validation), 6);
        assert_eq!(ledger.phase_total(Phase::Training), 0);
        let snap = ledger.snapshot();
        assert_eq!(snap.validation_calls, 6);
        assert_eq!(snap.validation["reason_call"], 3);
        assert_eq!(snap.total_generation_calls, 6);
    }

    #[test]
    fn concurrent_records_sum_exactly() {
        let ledger = CallLedger::new();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..1000 {
                        ledger.record(Phase::Training, CallTag::ApCall);
                        ledger.record_embedding();
                    }
                });
            }
        });
        assert_eq!(ledger.count(Phase::Training, CallTag::ApCall), 8000);
        assert_eq!(ledger.embedding_calls(), 8000);
    }

    #[test]
    fn since_and_merge_are_inverse() {
        let ledger = CallLedger::new();
        ledger.record(Phase::Training, CallTag::ReasonCall);
        let before = ledger.snapshot();
        ledger.record(Phase::Validation, CallTag::DirectCall);
        ledger.record(Phase::Training, CallTag::ReasonCall);
        let after = ledger.snapshot();
        let delta = after.since(&before);
        assert_eq!(delta.training_calls, 1);
        assert_eq!(delta.validation_calls, 1);
        let mut rebuilt = before.clone();
        rebuilt.merge(&delta);
        assert_eq!(rebuilt, after);
    }
}
