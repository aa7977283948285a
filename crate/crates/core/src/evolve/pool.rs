//! Candidate algorithms and the greedy candidate pool.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::runner::CandidateStatus;
use crate::selection::{sample_without_replacement, SelectionError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Seed,
    Mutation,
    Crossover,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Seed => "seed",
            OpKind::Mutation => "mutation",
            OpKind::Crossover => "crossover",
        }
    }

    /// Number of parents the operator consumes.
    pub fn arity(self) -> usize {
        match self {
            OpKind::Seed => 0,
            OpKind::Mutation => 1,
            OpKind::Crossover => 2,
        }
    }
}

pub fn code_hash(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateAlgorithm {
    pub id: String,
    pub source: String,
    pub parents: Vec<String>,
    pub template_id: Option<String>,
    pub op_kind: OpKind,
    /// Mean performance ratio over the training instances; failed instances count 0.
    pub score: f64,
    pub status: CandidateStatus,
    pub code_hash: String,
    pub instance_scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PoolUpdate {
    /// Added; the id evicted to respect capacity, possibly the new candidate itself.
    Inserted { evicted: Option<String> },
    Duplicate { existing: String },
    /// Only valid candidates enter the pool.
    NotValid,
}

impl PoolUpdate {
    pub fn evicted(&self) -> Option<&str> {
        match self {
            PoolUpdate::Inserted { evicted } => evicted.as_deref(),
            _ => None,
        }
    }
}

/// Keeps the best `capacity` valid candidates, oldest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub capacity: usize,
    entries: Vec<CandidateAlgorithm>,
}

impl CandidatePool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), entries: Vec::new() }
    }

    pub fn entries(&self) -> &[CandidateAlgorithm] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CandidateAlgorithm> {
        self.entries.iter().find(|c| c.id == id)
    }

    /// Highest score, older first on ties.
    pub fn best(&self) -> Option<&CandidateAlgorithm> {
        self.entries.iter().reduce(|b, c| if c.score > b.score { c } else { b })
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|c| c.score).collect()
    }

    pub fn update(&mut self, candidate: CandidateAlgorithm) -> PoolUpdate {
        if candidate.status != CandidateStatus::Valid {
            return PoolUpdate::NotValid;
        }
        if let Some(existing) = self.entries.iter().find(|c| c.code_hash == candidate.code_hash) {
            return PoolUpdate::Duplicate { existing: existing.id.clone() };
        }
        self.entries.push(candidate);
        if self.entries.len() <= self.capacity {
            return PoolUpdate::Inserted { evicted: None };
        }
        let best = self.best().map(|b| b.id.clone());
        // Lowest score, newer first on ties.
        let victim = (0..self.entries.len())
            .filter(|&i| Some(&self.entries[i].id) != best.as_ref())
            .reduce(|w, i| if self.entries[i].score <= self.entries[w].score { i } else { w })
            .expect("pool over capacity has a non-best entry");
        PoolUpdate::Inserted { evicted: Some(self.entries.remove(victim).id) }
    }

    /// `k` distinct parents by the rank law.
    pub fn select_parents<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&CandidateAlgorithm>, SelectionError> {
        Ok(sample_without_replacement(&self.scores(), k, rng)?.into_iter().map(|i| &self.entries[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, score: f64, src: &str) -> CandidateAlgorithm {
        CandidateAlgorithm {
            id: id.into(),
            source: src.into(),
            parents: vec![],
            template_id: None,
            op_kind: OpKind::Mutation,
            score,
            status: CandidateStatus::Valid,
            code_hash: code_hash(src),
            instance_scores: vec![score],
        }
    }

    #[test]
    fn duplicates_and_invalid_are_rejected() {
        let mut pool = CandidatePool::new(3);
        assert_eq!(pool.update(cand("a", 0.5, "x")), PoolUpdate::Inserted { evicted: None });
        assert_eq!(pool.update(cand("b", 0.9, "x")), PoolUpdate::Duplicate { existing: "a".into() });
        let mut bad = cand("c", 0.0, "y");
        bad.status = CandidateStatus::ParseFailed;
        assert_eq!(pool.update(bad), PoolUpdate::NotValid);
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn greedy_eviction() {
        let mut pool = CandidatePool::new(2);
        pool.update(cand("a", 0.5, "a"));
        pool.update(cand("b", 0.7, "b"));
        assert_eq!(pool.update(cand("c", 0.9, "c")).evicted(), Some("a"));
        // A worse newcomer is evicted straight away.
        assert_eq!(pool.update(cand("d", 0.1, "d")).evicted(), Some("d"));
        // Equal scores: the newer goes.
        assert_eq!(pool.update(cand("e", 0.7, "e")).evicted(), Some("e"));
        assert_eq!(pool.best().unwrap().id, "c");
    }

    #[test]
    fn capacity_one_keeps_the_best() {
        let mut pool = CandidatePool::new(1);
        pool.update(cand("a", 0.5, "a"));
        assert_eq!(pool.update(cand("b", 0.6, "b")).evicted(), Some("a"));
        assert_eq!(pool.update(cand("c", 0.6, "c")).evicted(), Some("c"));
    }
}
