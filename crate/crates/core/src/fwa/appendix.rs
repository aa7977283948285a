//! Guided airland operators: displacement-weighted moves toward the target-time
//! order, repair of LP-infeasible sequences by adjacent swaps, and short local
//! improvement loops that accept strictly cheaper neighbours.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{move_element, weighted_index, Context, FwaParams, Individual, Payload, Rng};

fn position_map(seq: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; seq.len()];
    for (k, &p) in seq.iter().enumerate() {
        pos[p] = k;
    }
    pos
}

fn displacement(ctx: &Context, pos: &[usize]) -> Vec<usize> {
    pos.iter().zip(&ctx.target_pos).map(|(&a, &b)| a.abs_diff(b)).collect()
}

/// Draws from `p` given as cumulative-free probabilities summing to 1.
fn pick(rng: &mut Rng, p: &[f64]) -> usize {
    weighted_index(rng, p)
}

/// `trunc(N(0, sigma))`, matching an `int()` cast of a normal draw.
fn jitter(rng: &mut Rng, sigma: usize) -> i64 {
    Normal::new(0.0, sigma as f64).expect("positive sigma").sample(rng) as i64
}

fn clamp_pos(x: i64, hi: usize) -> usize {
    x.clamp(0, hi as i64) as usize
}

fn swap_planes(seq: &mut [usize], pos: &mut [usize], a: usize, b: usize) {
    let (i, j) = (pos[a], pos[b]);
    seq.swap(i, j);
    pos[seq[i]] = i;
    pos[seq[j]] = j;
}

/// Accepts adjacent swaps that strictly lower the LP cost, `trials` times.
fn local_improve_swaps(ctx: &Context, seq: Vec<usize>, trials: usize, rng: &mut Rng) -> (Vec<usize>, Option<Vec<f64>>, f64) {
    let n = ctx.n;
    let (mut times, mut cost) = ctx.schedule(&seq);
    let mut best = seq;
    if !cost.is_finite() || n < 2 {
        return (best, times, cost);
    }
    for _ in 0..trials {
        let p = rng.random_range(0..n - 1);
        let mut cand = best.clone();
        cand.swap(p, p + 1);
        let (t, c) = ctx.schedule(&cand);
        if c < cost {
            best = cand;
            times = t;
            cost = c;
        }
    }
    (best, times, cost)
}

pub(super) fn explode(
    ctx: &Context,
    params: &FwaParams,
    firework: &[usize],
    amp: usize,
    rng: &mut Rng,
) -> Vec<Individual> {
    let n = ctx.n;
    let mut out = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::from([firework.to_vec()]);

    for _ in 0..params.sparks_per_firework() {
        for _try in 0..10 {
            let mut seq = firework.to_vec();
            let mut pos = position_map(&seq);
            let weights: Vec<f64> = displacement(ctx, &pos)
                .iter()
                .zip(&ctx.penalties)
                .map(|(&d, &pen)| 1.0 + d as f64 * (1.0 + pen))
                .collect();

            let steps = rng.random_range(1..=amp);
            for _ in 0..steps {
                match pick(rng, &[0.5, 0.3, 0.2]) {
                    0 => {
                        let a = weighted_index(rng, &weights);
                        let mut b = weighted_index(rng, &weights);
                        if a == b {
                            b = (b + 1) % n;
                        }
                        swap_planes(&mut seq, &mut pos, a, b);
                    }
                    1 => {
                        let k = weighted_index(rng, &weights);
                        let new_pos = clamp_pos(ctx.target_pos[k] as i64 + jitter(rng, (amp / 2).max(1)), n - 1);
                        move_element(&mut seq, pos[k], new_pos);
                        pos = position_map(&seq);
                    }
                    _ => {
                        if n < 2 {
                            continue;
                        }
                        let hi = n.min(amp + 2);
                        let len = if hi > 2 { rng.random_range(2..hi) } else { 2 };
                        let start = rng.random_range(0..=n - len);
                        seq[start..start + len].reverse();
                        pos = position_map(&seq);
                    }
                }
            }
            if seen.contains(&seq) {
                continue;
            }

            let (_, cost) = ctx.schedule(&seq);
            if !cost.is_finite() {
                if n < 2 {
                    continue;
                }
                let mut cand = seq.clone();
                let mut repaired = false;
                for _ in 0..3 {
                    let p = rng.random_range(0..n - 1);
                    cand.swap(p, p + 1);
                    if ctx.schedule(&cand).1.is_finite() {
                        seq = cand.clone();
                        repaired = true;
                        break;
                    }
                }
                if !repaired {
                    continue;
                }
            }

            let (seq, times, cost) = local_improve_swaps(ctx, seq, amp.min(3), rng);
            if !cost.is_finite() || seen.contains(&seq) {
                continue;
            }
            seen.insert(seq.clone());
            out.push(Individual { times, ..Individual::new(Payload::Perm(seq)) });
            break;
        }
    }
    out
}

struct Guide {
    weights: Vec<f64>,
    pos: Vec<usize>,
    disp: Vec<usize>,
}

fn mutation_guide(ctx: &Context, seq: &[usize]) -> Guide {
    let pos = position_map(seq);
    let disp = displacement(ctx, &pos);
    let weights = disp
        .iter()
        .zip(&ctx.penalties)
        .map(|(&d, &pen)| 1.0 + (d as f64 + 1.0) * (pen + 1.0))
        .collect();
    Guide { weights, pos, disp }
}

fn argmax(v: &[usize]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn mutate_once(ctx: &Context, base: &[usize], rng: &mut Rng) -> Vec<usize> {
    let n = ctx.n;
    let mut g = mutation_guide(ctx, base);
    let mut seq = base.to_vec();
    let steps = 1 + usize::from(rng.random::<f64>() < 0.5);
    for _ in 0..steps {
        match pick(rng, &[0.35, 0.35, 0.2, 0.1]) {
            0 if n >= 2 => {
                let a = weighted_index(rng, &g.weights);
                let mut b = weighted_index(rng, &g.weights);
                if a == b {
                    b = (b + 1) % n;
                }
                swap_planes(&mut seq, &mut g.pos, a, b);
            }
            1 => {
                let k = if rng.random::<f64>() < 0.6 { argmax(&g.disp) } else { weighted_index(rng, &g.weights) };
                let new_pos = clamp_pos(ctx.target_pos[k] as i64 + jitter(rng, (n / 10).max(1)), n - 1);
                let from = position_map(&seq)[k];
                move_element(&mut seq, from, new_pos);
                g = mutation_guide(ctx, &seq);
            }
            2 if n >= 3 => {
                let len = rng.random_range(2..=n.min(8));
                let start = rng.random_range(0..=n - len);
                seq[start..start + len].reverse();
                g = mutation_guide(ctx, &seq);
            }
            3 => {
                let l = if n >= 4 { *[1, 2, 3].choose(rng).expect("nonempty") } else { 1 };
                if n > l {
                    let start = rng.random_range(0..=n - l);
                    let block: Vec<usize> = seq[start..start + l].to_vec();
                    let mut rest: Vec<usize> = seq[..start].to_vec();
                    rest.extend_from_slice(&seq[start + l..]);
                    let mean = block.iter().map(|&p| ctx.target_pos[p] as f64).sum::<f64>() / l as f64;
                    let centre = mean.round_ties_even() as i64;
                    let at = clamp_pos(centre + jitter(rng, (n / 12).max(1)), n - l);
                    rest.splice(at..at, block);
                    seq = rest;
                    g = mutation_guide(ctx, &seq);
                }
            }
            _ => {}
        }
    }
    seq
}

/// Four trials mixing adjacent swaps (p = 0.6) and short reversals.
fn local_improve_mixed(ctx: &Context, seq: Vec<usize>, rng: &mut Rng) -> (Vec<usize>, Option<Vec<f64>>, f64) {
    let n = ctx.n;
    let (mut times, mut cost) = ctx.schedule(&seq);
    let mut best = seq;
    if !cost.is_finite() {
        return (best, times, cost);
    }
    for _ in 0..4 {
        let mut cand = best.clone();
        if rng.random::<f64>() < 0.6 && n >= 2 {
            let p = rng.random_range(0..n - 1);
            cand.swap(p, p + 1);
        } else if n >= 3 {
            let len = rng.random_range(2..=n.min(8));
            let start = rng.random_range(0..=n - len);
            cand[start..start + len].reverse();
        } else {
            continue;
        }
        let (t, c) = ctx.schedule(&cand);
        if c < cost {
            best = cand;
            times = t;
            cost = c;
        }
    }
    (best, times, cost)
}

pub(super) fn mutate(ctx: &Context, params: &FwaParams, sparks: &[Individual], rng: &mut Rng) -> Vec<Individual> {
    let n = ctx.n;
    let mut out = Vec::new();
    let target = params.mutation_target(sparks.len());
    if target == 0 {
        return out;
    }
    let mut seen: HashSet<Vec<usize>> = sparks
        .iter()
        .filter_map(|s| match &s.payload {
            Payload::Perm(p) => Some(p.clone()),
            _ => None,
        })
        .collect();

    let mut order: Vec<usize> = (0..sparks.len()).collect();
    order.shuffle(rng);
    order.truncate(target);

    for k in order {
        let Payload::Perm(base) = &sparks[k].payload else { continue };
        for _attempt in 0..6 {
            let mut cand = mutate_once(ctx, base, rng);
            if seen.contains(&cand) {
                continue;
            }
            if !ctx.schedule(&cand).1.is_finite() {
                let mut cur = cand.clone();
                let mut repaired = false;
                for _ in 0..5 {
                    let g = mutation_guide(ctx, &cur);
                    let focus =
                        if rng.random::<f64>() < 0.7 { argmax(&g.disp) } else { weighted_index(rng, &g.weights) };
                    let new_pos = clamp_pos(ctx.target_pos[focus] as i64 + jitter(rng, (n / 12).max(1)), n - 1);
                    move_element(&mut cur, g.pos[focus], new_pos);
                    if n >= 2 && rng.random::<f64>() < 0.6 {
                        let p = rng.random_range(0..n - 1);
                        cur.swap(p, p + 1);
                    }
                    if ctx.schedule(&cur).1.is_finite() {
                        cand = cur.clone();
                        repaired = true;
                        break;
                    }
                }
                if !repaired {
                    continue;
                }
            }
            let (seq, times, cost) = local_improve_mixed(ctx, cand, rng);
            if cost.is_finite() && !seen.contains(&seq) {
                seen.insert(seq.clone());
                out.push(Individual { times, ..Individual::new(Payload::Perm(seq)) });
            }
            break;
        }
        if out.len() >= target {
            break;
        }
    }
    out
}
