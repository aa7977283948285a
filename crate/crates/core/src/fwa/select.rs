//! Elite, diversity, fill and duplicate rounds.

use std::collections::HashSet;

use super::{Individual, Payload};

fn distance(a: &Payload, b: &Payload) -> f64 {
    match (a, b) {
        (Payload::Perm(x), Payload::Perm(y)) => {
            let n = x.len();
            if n == 0 {
                return 0.0;
            }
            let mut px = vec![0usize; n];
            let mut py = vec![0usize; n];
            for k in 0..n {
                px[x[k]] = k;
                py[y[k]] = k;
            }
            px.iter().zip(&py).map(|(&i, &j)| i.abs_diff(j) as f64).sum::<f64>() / n as f64
        }
        (Payload::Bits(x), Payload::Bits(y)) => x.iter().zip(y).filter(|(a, b)| a != b).count() as f64,
        (Payload::Groups(x), Payload::Groups(y)) => x.iter().zip(y).filter(|(a, b)| a != b).count() as f64,
        _ => f64::INFINITY,
    }
}

fn clean(f: f64) -> f64 {
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}

/// Picks up to `size` candidates; the first pick is always the best one.
pub(super) fn select(candidates: &[&Individual], size: usize) -> Vec<Individual> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| clean(candidates[a].fitness).total_cmp(&clean(candidates[b].fitness)).then(a.cmp(&b)));

    let n = candidates.first().map_or(0, |c| c.payload.len());
    let threshold = (n as f64 / 12.0).max(1.0);
    let elite_quota = ((size as f64 * 0.6) as usize).max(1);

    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    let mut is_chosen = vec![false; candidates.len()];
    let mut seen: HashSet<&Payload> = HashSet::new();

    for &i in &order {
        if chosen.len() >= elite_quota.min(size) {
            break;
        }
        if seen.insert(&candidates[i].payload) {
            chosen.push(i);
            is_chosen[i] = true;
        }
    }

    for &i in &order {
        if chosen.len() >= size {
            break;
        }
        if is_chosen[i] || seen.contains(&candidates[i].payload) {
            continue;
        }
        let min_dist = chosen
            .iter()
            .map(|&j| distance(&candidates[i].payload, &candidates[j].payload))
            .fold(f64::INFINITY, f64::min);
        if min_dist >= threshold {
            seen.insert(&candidates[i].payload);
            chosen.push(i);
            is_chosen[i] = true;
        }
    }

    for &i in &order {
        if chosen.len() >= size {
            break;
        }
        if !is_chosen[i] && seen.insert(&candidates[i].payload) {
            chosen.push(i);
            is_chosen[i] = true;
        }
    }

    for &i in &order {
        if chosen.len() >= size {
            break;
        }
        if !is_chosen[i] {
            chosen.push(i);
            is_chosen[i] = true;
        }
    }

    chosen.into_iter().map(|i| candidates[i].clone()).collect()
}
