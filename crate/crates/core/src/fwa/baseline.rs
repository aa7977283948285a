//! Uniform random operators for all three encodings.
//!
//! Permutations: swap, insertion or reversal with equal probability. Binary strings:
//! swap a one with a zero, which keeps the weight. Group labels: relabel one
//! position, then restore coverage of all eight groups.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{move_element, Context, FwaParams, Individual, Payload, Rng};
use crate::problem::GROUP_COUNT;

fn perm_move(seq: &mut Vec<usize>, rng: &mut Rng) {
    let n = seq.len();
    if n < 2 {
        return;
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    match rng.random_range(0..3) {
        0 => seq.swap(i, j),
        1 => move_element(seq, i, j),
        _ => seq[i.min(j)..=i.max(j)].reverse(),
    }
}

fn bit_swap(bits: &mut [bool], rng: &mut Rng) {
    let ones: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
    let zeros: Vec<usize> = (0..bits.len()).filter(|&i| !bits[i]).collect();
    if let (Some(&a), Some(&b)) = (ones.choose(rng), zeros.choose(rng)) {
        bits.swap(a, b);
    }
}

fn relabel(groups: &mut [u8], rng: &mut Rng) {
    let i = rng.random_range(0..groups.len());
    let mut g = rng.random_range(1..GROUP_COUNT as u8);
    if g >= groups[i] {
        g += 1;
    }
    groups[i] = g;
}

/// Gives every empty group one member taken from a group with at least two.
pub(super) fn repair_coverage(groups: &mut [u8], rng: &mut Rng) {
    let mut counts = [0usize; GROUP_COUNT];
    for &g in groups.iter() {
        counts[(g - 1) as usize] += 1;
    }
    for missing in 0..GROUP_COUNT {
        if counts[missing] > 0 {
            continue;
        }
        let donors: Vec<usize> = (0..groups.len()).filter(|&i| counts[(groups[i] - 1) as usize] > 1).collect();
        let Some(&i) = donors.choose(rng) else { return };
        counts[(groups[i] - 1) as usize] -= 1;
        groups[i] = missing as u8 + 1;
        counts[missing] += 1;
    }
}

fn apply_moves(payload: &Payload, moves: usize, rng: &mut Rng) -> Payload {
    match payload {
        Payload::Perm(p) => {
            let mut p = p.clone();
            for _ in 0..moves {
                perm_move(&mut p, rng);
            }
            Payload::Perm(p)
        }
        Payload::Bits(b) => {
            let mut b = b.clone();
            for _ in 0..moves {
                bit_swap(&mut b, rng);
            }
            Payload::Bits(b)
        }
        Payload::Groups(g) => {
            let mut g = g.clone();
            for _ in 0..moves {
                relabel(&mut g, rng);
            }
            repair_coverage(&mut g, rng);
            Payload::Groups(g)
        }
    }
}

fn individual(ctx: &Context, payload: Payload) -> Individual {
    match payload {
        Payload::Perm(p) => ctx.perm_individual(p),
        other => Individual::new(other),
    }
}

/// `sp_size / fw_size` sparks of exactly `amp` moves each, up to ten tries per spark.
pub(super) fn explode(
    ctx: &Context,
    params: &FwaParams,
    firework: &Payload,
    amp: usize,
    rng: &mut Rng,
) -> Vec<Individual> {
    let mut seen: HashSet<Payload> = HashSet::from([firework.clone()]);
    let mut out = Vec::new();
    for _ in 0..params.sparks_per_firework() {
        for _try in 0..10 {
            let spark = apply_moves(firework, amp, rng);
            if seen.insert(spark.clone()) {
                out.push(individual(ctx, spark));
                break;
            }
        }
    }
    out
}

/// One move applied to each of a random subset of the sparks.
pub(super) fn mutate(ctx: &Context, params: &FwaParams, sparks: &[Individual], rng: &mut Rng) -> Vec<Individual> {
    let target = params.mutation_target(sparks.len());
    let mut seen: HashSet<Payload> = sparks.iter().map(|s| s.payload.clone()).collect();
    let mut order: Vec<usize> = (0..sparks.len()).collect();
    order.shuffle(rng);
    order.truncate(target);
    let mut out = Vec::new();
    for k in order {
        for _attempt in 0..6 {
            let child = apply_moves(&sparks[k].payload, 1, rng);
            if seen.insert(child.clone()) {
                out.push(individual(ctx, child));
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn moves_preserve_structure() {
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..200 {
            let Payload::Perm(mut p) = apply_moves(&Payload::Perm((0..7).collect()), 3, &mut rng) else { panic!() };
            p.sort();
            assert_eq!(p, (0..7).collect::<Vec<_>>());

            let bits = vec![true, false, true, false, false];
            let Payload::Bits(b) = apply_moves(&Payload::Bits(bits), 4, &mut rng) else { panic!() };
            assert_eq!(b.iter().filter(|&&x| x).count(), 2);

            let groups: Vec<u8> = (0..10).map(|i| (i % 8) as u8 + 1).collect();
            let Payload::Groups(g) = apply_moves(&Payload::Groups(groups), 5, &mut rng) else { panic!() };
            for label in 1..=8u8 {
                assert!(g.contains(&label));
            }
        }
    }

    #[test]
    fn relabel_always_changes_the_label() {
        let mut rng = Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut g = vec![4u8];
            relabel(&mut g, &mut rng);
            assert_ne!(g[0], 4);
            assert!((1..=8).contains(&g[0]));
        }
    }
}
