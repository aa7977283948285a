//! Rank-proportional sampling shared by candidate and template selection.
//!
//! With `n` items ranked 1 (best) to `n`, item `i` is drawn with probability
//! `(n + 1 - rank_i) / (1 + 2 + ... + n)`.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("cannot rank an empty list")]
    Empty,
    #[error("need {wanted} items, only {available} available")]
    TooFew { wanted: usize, available: usize },
}

/// 1-based ranks, highest score first. Equal scores rank the lower index (older) first.
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rank = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

/// Selection probability of each item, aligned with `scores`.
pub fn rank_probabilities(scores: &[f64]) -> Result<Vec<f64>, SelectionError> {
    if scores.is_empty() {
        return Err(SelectionError::Empty);
    }
    let n = scores.len() as u64;
    let total = (n * (n + 1) / 2) as f64;
    Ok(ranks(scores).into_iter().map(|r| (n + 1 - r as u64) as f64 / total).collect())
}

/// Draws one index from `probs` (which sum to 1).
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `k` distinct indices drawn one after another; each draw re-ranks the remaining items.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    scores: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    if scores.len() < k {
        return Err(SelectionError::TooFew { wanted: k, available: scores.len() });
    }
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let sub: Vec<f64> = remaining.iter().map(|&i| scores[i]).collect();
        let probs = rank_probabilities(&sub)?;
        picked.push(remaining.remove(sample_index(&probs, rng)));
    }
    Ok(picked)
}
