//! Exemplar memory banks: storage, retrieval and persistence.
//!
//! Banks are append-only while training and read-only afterwards. Retrieval
//! never returns an exemplar derived from the query example itself.

mod train;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canon::TaskId;
use crate::gateway::cosine_distance;
use crate::types::{Exemplar, Provenance, TaskExample};

pub use train::{build_frozen, train_learned_ap, train_learned_ncot, TrainerConfig, TrainingReport, TrainingStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Frozen,
    LearnedNcot,
    LearnedAp,
}

impl BankKind {
    pub fn provenance(&self) -> Provenance {
        match self {
            BankKind::Frozen => Provenance::FrozenZcot,
            BankKind::LearnedNcot => Provenance::LearnedNcot,
            BankKind::LearnedAp => Provenance::LearnedAp,
        }
    }

    fn from_provenance(p: Provenance) -> Self {
        match p {
            Provenance::FrozenZcot => BankKind::Frozen,
            Provenance::LearnedNcot => BankKind::LearnedNcot,
            Provenance::LearnedAp => BankKind::LearnedAp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Fixed,
    Random,
    Similar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalSpec {
    pub mode: RetrievalMode,
    pub k: usize,
    pub fixed_seed: Option<u64>,
}

impl RetrievalSpec {
    pub fn fixed(k: usize, seed: u64) -> Self {
        Self {
            mode: RetrievalMode::Fixed,
            k,
            fixed_seed: Some(seed),
        }
    }

    pub fn random(k: usize) -> Self {
        Self {
            mode: RetrievalMode::Random,
            k,
            fixed_seed: None,
        }
    }

    pub fn similar(k: usize) -> Self {
        Self {
            mode: RetrievalMode::Similar,
            k,
            fixed_seed: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("invalid bank: {0}")]
    Invariant(String),
    #[error("retrieval configuration: {0}")]
    Config(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Bank-level metadata persisted next to the exemplar JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankMeta {
    pub task: TaskId,
    pub model: String,
    pub kind: BankKind,
    pub embedding_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    task: TaskId,
    model: String,
    kind: BankKind,
    embedding_dim: Option<usize>,
    exemplars: Vec<Exemplar>,
}

impl MemoryBank {
    pub fn new(task: TaskId, model: impl Into<String>, kind: BankKind) -> Self {
        Self {
            task,
            model: model.into(),
            kind,
            embedding_dim: None,
            exemplars: Vec::new(),
        }
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn meta(&self) -> BankMeta {
        BankMeta {
            task: self.task,
            model: self.model.clone(),
            kind: self.kind,
            embedding_dim: self.embedding_dim,
        }
    }

    fn next_seq(&self) -> u64 {
        self.exemplars.last().map_or(0, |e| e.created_seq + 1)
    }

    /// Append a record, assigning its `created_seq`.
    pub fn append(
        &mut self,
        id: String,
        question: String,
        chain_of_thought: String,
        answer: String,
        embedding: Option<Vec<f64>>,
        source_example_id: Option<String>,
    ) -> Result<&Exemplar, MemoryError> {
        let ex = Exemplar {
            id,
            question,
            chain_of_thought,
            answer,
            embedding,
            provenance: self.kind.provenance(),
            source_example_id,
            created_seq: self.next_seq(),
        };
        self.push(ex)?;
        Ok(self.exemplars.last().expect("just pushed"))
    }

    /// Append a fully-formed record after checking it against the bank invariants.
    pub fn push(&mut self, ex: Exemplar) -> Result<(), MemoryError> {
        if ex.provenance != self.kind.provenance() {
            return Err(MemoryError::Invariant(format!(
                "exemplar {} has provenance {:?} in a {:?} bank",
                ex.id, ex.provenance, self.kind
            )));
        }
        if matches!(ex.provenance, Provenance::FrozenZcot | Provenance::LearnedNcot)
            && ex.chain_of_thought.trim().is_empty()
        {
            return Err(MemoryError::Invariant(format!("exemplar {} has an empty chain of thought", ex.id)));
        }
        if let Some(last) = self.exemplars.last() {
            if ex.created_seq <= last.created_seq {
                return Err(MemoryError::Invariant(format!(
                    "created_seq {} of {} does not follow {}",
                    ex.created_seq, ex.id, last.created_seq
                )));
            }
        }
        if let Some(e) = &ex.embedding {
            match self.embedding_dim {
                Some(d) if d != e.len() => {
                    return Err(MemoryError::Invariant(format!(
                        "embedding of {} has dimension {}, bank uses {d}",
                        ex.id,
                        e.len()
                    )))
                }
                None => self.embedding_dim = Some(e.len()),
                _ => {}
            }
        }
        if self.exemplars.iter().any(|e| e.id == ex.id) {
            return Err(MemoryError::Invariant(format!("duplicate exemplar id {}", ex.id)));
        }
        self.exemplars.push(ex);
        Ok(())
    }

    fn eligible(&self, query: &TaskExample) -> Vec<usize> {
        self.exemplars
            .iter()
            .enumerate()
            .filter(|(_, e)| e.source_example_id.as_deref() != Some(query.id.as_str()))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(PartialEq)]
struct Candidate {
    distance: f64,
    seq: u64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Select exemplars for `query`.
///
/// * `Fixed`: a permutation of the whole bank is drawn once from
///   `fixed_seed`; the first `min(K, eligible)` eligible entries are returned
///   for every query.
/// * `Random`: a fresh sample without replacement seeded by `rng_seed`.
/// * `Similar`: the `min(K, eligible)` exemplars nearest to
///   `query_embedding` by cosine distance, nearest first, ties broken by
///   lower `created_seq`.
pub fn retrieve<'b>(
    bank: &'b MemoryBank,
    spec: &RetrievalSpec,
    query: &TaskExample,
    query_embedding: Option<&[f64]>,
    rng_seed: u64,
) -> Result<Vec<&'b Exemplar>, MemoryError> {
    if spec.k == 0 {
        return Err(MemoryError::Config("retrieval needs K >= 1".into()));
    }
    if bank.is_empty() {
        return Ok(Vec::new());
    }
    let eligible = bank.eligible(query);
    let take = spec.k.min(eligible.len());

    let picked: Vec<usize> = match spec.mode {
        RetrievalMode::Fixed => {
            let seed = spec
                .fixed_seed
                .ok_or_else(|| MemoryError::Config("fixed retrieval needs a fixed_seed".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = bank.len();
            let excluded: HashSet<usize> = (0..n).filter(|i| !eligible.contains(i)).collect();
            index::sample(&mut rng, n, n)
                .into_iter()
                .filter(|i| !excluded.contains(i))
                .take(take)
                .collect()
        }
        RetrievalMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            index::sample(&mut rng, eligible.len(), take)
                .into_iter()
                .map(|j| eligible[j])
                .collect()
        }
        RetrievalMode::Similar => {
            let q = query_embedding
                .ok_or_else(|| MemoryError::Config("similar retrieval needs a query embedding".into()))?;
            let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(take + 1);
            for &i in &eligible {
                let ex = &bank.exemplars[i];
                let emb = ex.embedding.as_deref().ok_or_else(|| {
                    MemoryError::Config(format!("exemplar {} has no embedding", ex.id))
                })?;
                if emb.len() != q.len() {
                    return Err(MemoryError::Config(format!(
                        "query embedding has dimension {}, exemplar {} has {}",
                        q.len(),
                        ex.id,
                        emb.len()
                    )));
                }
                heap.push(Candidate {
                    distance: cosine_distance(q, emb),
                    seq: ex.created_seq,
                    idx: i,
                });
                if heap.len() > take {
                    heap.pop();
                }
            }
            heap.into_sorted_vec().into_iter().map(|c| c.idx).collect()
        }
    };
    Ok(picked.into_iter().map(|i| &bank.exemplars[i]).collect())
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MemoryError + '_ {
    move |source| MemoryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write the bank as JSONL (one exemplar per line) plus a `<path>.meta.json` sidecar.
pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<(), MemoryError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    for ex in &bank.exemplars {
        let line = serde_json::to_string(ex).expect("exemplar serializes");
        out.write_all(line.as_bytes()).map_err(io_err(path))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    let meta = meta_path(path);
    let text = serde_json::to_string_pretty(&bank.meta()).expect("meta serializes");
    fs::write(&meta, text + "\n").map_err(io_err(&meta))
}

/// Load a bank written by [`save_bank`], re-checking every invariant.
///
/// Without a sidecar the kind is inferred from the exemplars' provenance and
/// the task defaults to `synth`.
pub fn load_bank(path: &Path) -> Result<MemoryBank, MemoryError> {
    let meta_file = meta_path(path);
    let meta: Option<BankMeta> = match fs::read_to_string(&meta_file) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| MemoryError::Parse {
            path: meta_file.clone(),
            line: e.line(),
            message: e.to_string(),
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_err(&meta_file)(e)),
    };

    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Exemplar = serde_json::from_str(&line).map_err(|e| MemoryError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push((n + 1, ex));
    }

    let (task, model, kind) = match &meta {
        Some(m) => (m.task, m.model.clone(), m.kind),
        None => (
            TaskId::Synthetic,
            String::from("unknown"),
            records
                .first()
                .map_or(BankKind::Frozen, |(_, e)| BankKind::from_provenance(e.provenance)),
        ),
    };
    let mut bank = MemoryBank::new(task, model, kind);
    if let Some(m) = &meta {
        bank.embedding_dim = m.embedding_dim;
    }
    for (line, ex) in records {
        bank.push(ex).map_err(|e| MemoryError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Split;

    fn bank_of(n: usize, with_source: bool) -> MemoryBank {
        let mut b = MemoryBank::new(TaskId::Synthetic, "m", BankKind::Frozen);
        for i in 0..n {
            b.append(
                format!("e{i}"),
                format!("q{i}"),
                format!("t{i}"),
                format!("a{i}"),
                None,
                with_source.then(|| format!("train-{i}")),
            )
            .unwrap();
        }
        b
    }

    fn query(id: &str) -> TaskExample {
        TaskExample::new(id, "question?", "gold", Split::Validation)
    }

    fn ids(xs: &[&Exemplar]) -> Vec<String> {
        xs.iter().map(|e| e.id.clone()).collect()
    }

    #[test]
    fn fixed_reuses_the_same_exemplars() {
        let bank = bank_of(20, true);
        let spec = RetrievalSpec::fixed(3, 99);
        let a = retrieve(&bank, &spec, &query("v1"), None, 1).unwrap();
        let b = retrieve(&bank, &spec, &query("v2"), None, 2).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn random_is_a_subset_without_replacement() {
        let bank = bank_of(20, true);
        let spec = RetrievalSpec::random(5);
        let mut distinct = HashSet::new();
        for seed in 0..20 {
            let got = ids(&retrieve(&bank, &spec, &query("v"), None, seed).unwrap());
            let set: HashSet<_> = got.iter().cloned().collect();
            assert_eq!(set.len(), 5);
            distinct.insert(got);
        }
        assert!(distinct.len() > 1);
    }

    #[test]
    fn small_bank_clamps_and_empty_bank_is_empty() {
        let bank = bank_of(2, false);
        assert_eq!(retrieve(&bank, &RetrievalSpec::random(3), &query("v"), None, 0).unwrap().len(), 2);
        let empty = bank_of(0, false);
        assert!(retrieve(&empty, &RetrievalSpec::random(3), &query("v"), None, 0).unwrap().is_empty());
        assert!(retrieve(&empty, &RetrievalSpec::similar(3), &query("v"), None, 0).unwrap().is_empty());
    }

    #[test]
    fn self_exclusion() {
        let bank = bank_of(4, true);
        for spec in [RetrievalSpec::random(4), RetrievalSpec::fixed(4, 5)] {
            for seed in 0..10 {
                let got = retrieve(&bank, &spec, &query("train-2"), None, seed).unwrap();
                assert_eq!(got.len(), 3);
                assert!(got.iter().all(|e| e.source_example_id.as_deref() != Some("train-2")));
            }
        }
    }

    #[test]
    fn similar_orders_by_distance_then_seq() {
        let mut b = MemoryBank::new(TaskId::Synthetic, "m", BankKind::LearnedNcot);
        let vecs = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.1], [2.0, 0.0], [0.0, 0.0]];
        for (i, v) in vecs.iter().enumerate() {
            b.append(format!("e{i}"), "q".into(), "t".into(), "a".into(), Some(v.to_vec()), None)
                .unwrap();
        }
        let got = retrieve(&b, &RetrievalSpec::similar(3), &query("v"), Some(&[1.0, 0.0]), 0).unwrap();
        // e0 and e3 are both at distance 0; e0 is older
        assert_eq!(ids(&got), ["e0", "e3", "e2"]);
        let all = retrieve(&b, &RetrievalSpec::similar(5), &query("v"), Some(&[1.0, 0.0]), 0).unwrap();
        assert_eq!(all.last().unwrap().id, "e4");
    }

    #[test]
    fn similar_without_embeddings_is_a_config_error() {
        let bank = bank_of(3, false);
        assert!(matches!(
            retrieve(&bank, &RetrievalSpec::similar(2), &query("v"), Some(&[1.0]), 0),
            Err(MemoryError::Config(_))
        ));
        assert!(matches!(
            retrieve(&bank, &RetrievalSpec::similar(2), &query("v"), None, 0),
            Err(MemoryError::Config(_))
        ));
    }

    #[test]
    fn push_enforces_invariants() {
        let mut b = bank_of(1, false);
        let mut dup = b.exemplars()[0].clone();
        assert!(b.push(dup.clone()).is_err());
        dup.created_seq = 5;
        dup.id = "new".into();
        dup.chain_of_thought = " ".into();
        assert!(b.push(dup).is_err());
        let mut e = MemoryBank::new(TaskId::Synthetic, "m", BankKind::LearnedNcot);
        e.append("a".into(), "q".into(), "t".into(), "x".into(), Some(vec![1.0, 2.0]), None).unwrap();
        assert!(e
            .append("b".into(), "q".into(), "t".into(), "x".into(), Some(vec![1.0]), None)
            .is_err());
        assert_eq!(e.embedding_dim(), Some(2));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let plain = bank_of(5, true);
        let p1 = dir.path().join("plain.jsonl");
        save_bank(&plain, &p1).unwrap();
        assert_eq!(load_bank(&p1).unwrap(), plain);

        let mut embedded = MemoryBank::new(TaskId::Raco, "model-x", BankKind::LearnedNcot);
        for i in 0..4 {
            let v = vec![0.1 * i as f64, 1.0 / 3.0, -2.5e-17, std::f64::consts::PI];
            embedded
                .append(format!("e{i}"), format!("q{i}"), "t".into(), "a".into(), Some(v), Some(format!("s{i}")))
                .unwrap();
        }
        let p2 = dir.path().join("emb.jsonl");
        save_bank(&embedded, &p2).unwrap();
        assert_eq!(load_bank(&p2).unwrap(), embedded);
    }

    #[test]
    fn truncated_file_reports_first_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.jsonl");
        save_bank(&bank_of(3, false), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, &text[..text.len() - 20]).unwrap();
        match load_bank(&p) {
            Err(MemoryError::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_out_of_order_seq() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.jsonl");
        let b = bank_of(2, false);
        let lines: Vec<String> = b.exemplars().iter().rev().map(|e| serde_json::to_string(e).unwrap()).collect();
        fs::write(&p, lines.join("\n")).unwrap();
        assert!(matches!(load_bank(&p), Err(MemoryError::Parse { line: 2, .. })));
    }
}
