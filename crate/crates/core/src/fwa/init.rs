use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::baseline::repair_coverage;
use super::{Context, FwaParams, Individual, Payload, Preset, Rng};
use crate::landing::target_order;
use crate::problem::{EppInstance, Problem, GROUP_COUNT};

pub(super) fn initialize(ctx: &Context, preset: Preset, params: &FwaParams, rng: &mut Rng) -> Vec<Individual> {
    let size = params.fw_size;
    let n = ctx.n;
    match ctx.problem {
        Problem::Airland(inst) => {
            let seeded = ctx.perm_individual(target_order(inst));
            match preset {
                // Every firework starts from the target-time order.
                Preset::Appendix => vec![seeded; size],
                Preset::Baseline => {
                    let mut pop = vec![seeded];
                    while pop.len() < size {
                        pop.push(ctx.perm_individual(random_perm(n, rng)));
                    }
                    pop
                }
            }
        }
        Problem::Flowshop(_) => (0..size).map(|_| ctx.perm_individual(random_perm(n, rng))).collect(),
        Problem::Pmedian(inst) => (0..size)
            .map(|_| {
                let mut bits = vec![false; n];
                for i in index::sample(rng, n, inst.p) {
                    bits[i] = true;
                }
                Individual::new(Payload::Bits(bits))
            })
            .collect(),
        Problem::Epp(inst) => {
            let mut pop = vec![Individual::new(Payload::Groups(random_groups(n, rng)))];
            if size > 1 {
                let mut greedy = greedy_groups(inst);
                repair_coverage(&mut greedy, rng);
                pop.push(Individual::new(Payload::Groups(greedy)));
            }
            while pop.len() < size {
                pop.push(Individual::new(Payload::Groups(random_groups(n, rng))));
            }
            pop
        }
    }
}

fn random_perm(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Uniform labels in `1..=8` with every label used at least once (requires `n >= 8`).
pub(super) fn random_groups(n: usize, rng: &mut Rng) -> Vec<u8> {
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(1..=GROUP_COUNT as u8)).collect();
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);
    for (g, &i) in slots.iter().take(GROUP_COUNT).enumerate() {
        labels[i] = g as u8 + 1;
    }
    labels
}

/// Assigns individuals in index order to the group that least increases the total
/// absolute deviation of the counts assigned so far; ties go to the smaller group,
/// then the lower label.
pub(super) fn greedy_groups(inst: &EppInstance) -> Vec<u8> {
    let m = inst.n_attributes();
    let mut counts = vec![[0.0f64; GROUP_COUNT]; m];
    let mut sizes = [0usize; GROUP_COUNT];
    let mut labels = Vec::with_capacity(inst.n_individuals());
    let deviation = |row: &[f64; GROUP_COUNT]| {
        let mean = row.iter().sum::<f64>() / GROUP_COUNT as f64;
        row.iter().map(|c| (c - mean).abs()).sum::<f64>() / GROUP_COUNT as f64
    };
    for attrs in &inst.attributes {
        let mut best: Option<(f64, usize, usize)> = None;
        for g in 0..GROUP_COUNT {
            let mut total = 0.0;
            for (a, row) in counts.iter().enumerate() {
                let mut r = *row;
                r[g] += f64::from(attrs[a]);
                total += deviation(&r);
            }
            let key = (total, sizes[g], g);
            let better = match best {
                None => true,
                Some((t, s, _)) => total < t - 1e-12 || ((total - t).abs() <= 1e-12 && sizes[g] < s),
            };
            if better {
                best = Some(key);
            }
        }
        let (_, _, g) = best.expect("eight groups");
        for (a, row) in counts.iter_mut().enumerate() {
            row[g] += f64::from(attrs[a]);
        }
        sizes[g] += 1;
        labels.push(g as u8 + 1);
    }
    labels
}
