use std::collections::HashSet;

use coevo::fwa::{run_fwa, EvaluationBudget, Fwa, FwaError, FwaParams, Individual, Payload, Preset, Rng};
use coevo::landing::solve_sequence;
use coevo::problem::{
    AircraftLandingInstance, EppInstance, FlowShopInstance, PMedianInstance, Problem, ProblemKind, Solution,
};
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};

mod common;
use common::{plane, toy_instance, toy_landing};

fn flowshop() -> Problem {
    let proc = (0..7).map(|j| (0..3).map(|m| ((j * 7 + m * 3) % 9 + 1) as f64).collect()).collect();
    Problem::Flowshop(FlowShopInstance::new(proc).unwrap())
}

fn pmedian(n: usize, p: usize) -> Problem {
    let d = (0..n).map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect()).collect();
    Problem::Pmedian(PMedianInstance::new(p, d).unwrap())
}

fn epp() -> Problem {
    let attrs = (0..20).map(|i| vec![(i % 2) as u8, (i % 3 == 0) as u8, (i % 5 < 2) as u8]).collect();
    Problem::Epp(EppInstance::new(attrs).unwrap())
}

fn all_problems() -> Vec<Problem> {
    vec![Problem::Airland(toy_landing()), flowshop(), pmedian(9, 3), epp()]
}

fn structurally_valid(problem: &Problem, payload: &Payload) -> bool {
    match (problem, payload) {
        (Problem::Airland(_) | Problem::Flowshop(_), Payload::Perm(p)) => {
            let mut s = p.clone();
            s.sort();
            s == (0..problem.size()).collect::<Vec<_>>()
        }
        (Problem::Pmedian(inst), Payload::Bits(b)) => {
            b.len() == inst.n_vertices() && b.iter().filter(|&&x| x).count() == inst.p
        }
        (Problem::Epp(inst), Payload::Groups(g)) => {
            g.len() == inst.n_individuals() && (1..=8u8).all(|l| g.contains(&l)) && g.iter().all(|&l| (1..=8).contains(&l))
        }
        _ => false,
    }
}

fn evaluated(problem: &Problem, mut inds: Vec<Individual>) -> Vec<Individual> {
    for ind in &mut inds {
        ind.fitness = ind.solution(problem).map_or(f64::INFINITY, |s| problem.evaluate(&s).unwrap().fitness());
    }
    inds
}

#[test]
fn airland_population_starts_from_target_order() {
    let planes = vec![plane(0.0, 5.0, 20.0, 1.0, 1.0), plane(0.0, 1.0, 20.0, 1.0, 1.0), plane(0.0, 9.0, 20.0, 1.0, 1.0)];
    let sep = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    let problem = Problem::Airland(AircraftLandingInstance::new(planes, sep, 0.0).unwrap());
    for preset in [Preset::Appendix, Preset::Baseline] {
        let fwa = Fwa::new(&problem, preset, FwaParams::default()).unwrap();
        let pop = fwa.initialize_population(&mut Rng::seed_from_u64(0));
        assert_eq!(pop.len(), 5);
        assert_eq!(pop[0].payload, Payload::Perm(vec![1, 0, 2]));
        assert_eq!(pop[0].times.as_deref(), Some(&[5.0, 1.0, 9.0][..]));
    }
}

#[test]
fn pmedian_individuals_have_exactly_p_ones() {
    let problem = pmedian(5, 2);
    let fwa = Fwa::new(&problem, Preset::Baseline, FwaParams::default()).unwrap();
    for ind in fwa.initialize_population(&mut Rng::seed_from_u64(4)) {
        let Payload::Bits(b) = &ind.payload else { panic!() };
        assert_eq!(b.iter().filter(|&&x| x).count(), 2);
    }
}

#[test]
fn epp_population_has_random_and_greedy_members() {
    let problem = epp();
    let fwa = Fwa::new(&problem, Preset::Baseline, FwaParams::default()).unwrap();
    let pop = fwa.initialize_population(&mut Rng::seed_from_u64(2));
    assert!(pop.iter().all(|i| structurally_valid(&problem, &i.payload)));
    let pop = evaluated(&problem, pop);
    // The greedy member balances counts far better than random labelings.
    assert!(pop[1].fitness <= pop[0].fitness, "{} vs {}", pop[1].fitness, pop[0].fitness);
}

#[test]
fn initialization_is_deterministic() {
    for problem in all_problems() {
        let fwa = Fwa::new(&problem, Preset::Baseline, FwaParams::default()).unwrap();
        let a = fwa.initialize_population(&mut Rng::seed_from_u64(11));
        let b = fwa.initialize_population(&mut Rng::seed_from_u64(11));
        assert_eq!(a.iter().map(|i| &i.payload).collect::<Vec<_>>(), b.iter().map(|i| &i.payload).collect::<Vec<_>>());
    }
}

#[test]
fn appendix_preset_is_airland_only() {
    let problem = flowshop();
    assert_eq!(
        Fwa::new(&problem, Preset::Appendix, FwaParams::default()).err(),
        Some(FwaError::Unsupported { preset: Preset::Appendix, problem: ProblemKind::Flowshop })
    );
    let bad = FwaParams { sp_size: 2, ..FwaParams::default() };
    assert!(matches!(Fwa::new(&problem, Preset::Baseline, bad), Err(FwaError::Params(_))));
}

#[test]
fn two_plane_sparks_stay_in_permutation_space() {
    let planes = vec![plane(0.0, 0.0, 20.0, 1.0, 1.0), plane(0.0, 1.0, 20.0, 1.0, 1.0)];
    let sep = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
    let problem = Problem::Airland(AircraftLandingInstance::new(planes, sep, 0.0).unwrap());
    for preset in [Preset::Appendix, Preset::Baseline] {
        let fwa = Fwa::new(&problem, preset, FwaParams::default()).unwrap();
        let mut rng = Rng::seed_from_u64(5);
        let fw = &fwa.initialize_population(&mut rng)[0];
        for amp in 1..=5 {
            for s in fwa.explode(fw, amp, &mut rng) {
                assert!(s.payload == Payload::Perm(vec![1, 0]), "{:?}", s.payload);
            }
        }
    }
}

#[test]
fn appendix_sparks_are_lp_feasible_and_distinct() {
    let inst = toy_landing();
    let problem = Problem::Airland(inst.clone());
    let fwa = Fwa::new(&problem, Preset::Appendix, FwaParams::default()).unwrap();
    let mut rng = Rng::seed_from_u64(8);
    let fw = fwa.initialize_population(&mut rng).remove(0);
    for amp in 1..=5 {
        let sparks = fwa.explode(&fw, amp, &mut rng);
        assert!(sparks.len() <= 4);
        let keys: HashSet<&Payload> = sparks.iter().map(|s| &s.payload).collect();
        assert_eq!(keys.len(), sparks.len());
        assert!(!keys.contains(&fw.payload));
        for s in &sparks {
            let Payload::Perm(seq) = &s.payload else { panic!() };
            let r = solve_sequence(&inst, seq).unwrap();
            assert!(r.feasible);
            assert_eq!(s.times.as_ref(), r.to_schedule(seq).map(|s| s.times).as_ref());
        }
    }
}

#[test]
fn explode_is_deterministic_per_seed() {
    for problem in all_problems() {
        let preset = if problem.kind() == ProblemKind::Airland { Preset::Appendix } else { Preset::Baseline };
        let fwa = Fwa::new(&problem, preset, FwaParams::default()).unwrap();
        let fw = fwa.initialize_population(&mut Rng::seed_from_u64(1)).remove(0);
        let key = |v: Vec<Individual>| v.into_iter().map(|i| (i.payload, i.times)).collect::<Vec<_>>();
        let a = key(fwa.explode(&fw, 3, &mut Rng::seed_from_u64(21)));
        let b = key(fwa.explode(&fw, 3, &mut Rng::seed_from_u64(21)));
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}

#[test]
fn mutation_counts_and_novelty() {
    for problem in all_problems() {
        for preset in [Preset::Baseline, Preset::Appendix] {
            let Ok(fwa) = Fwa::new(&problem, preset, FwaParams::default()) else { continue };
            let mut rng = Rng::seed_from_u64(13);
            assert!(fwa.mutate_sparks(&[], &mut rng).is_empty());
            let pop = fwa.initialize_population(&mut rng);
            let mut sparks: Vec<Individual> = Vec::new();
            for fw in &pop {
                for s in fwa.explode(fw, 4, &mut rng) {
                    if sparks.len() < 10 && !sparks.iter().any(|x| x.payload == s.payload) {
                        sparks.push(s);
                    }
                }
            }
            let mutants = fwa.mutate_sparks(&sparks, &mut rng);
            let limit = (sparks.len() as f64 * 0.2).ceil() as usize;
            assert!(mutants.len() <= limit, "{} > {limit}", mutants.len());
            let inputs: HashSet<&Payload> = sparks.iter().map(|s| &s.payload).collect();
            let mut outs = HashSet::new();
            for m in &mutants {
                assert!(!inputs.contains(&m.payload));
                assert!(outs.insert(&m.payload));
                assert!(structurally_valid(&problem, &m.payload));
            }
        }
    }
}

fn arb_candidates() -> impl Strategy<Value = Vec<(Vec<usize>, Option<u16>)>> {
    prop::collection::vec((Just((0..6).collect::<Vec<usize>>()).prop_shuffle(), prop::option::weighted(0.8, 0u16..50)), 5..30)
}

proptest! {
    #[test]
    fn selection_keeps_size_and_best(cands in arb_candidates()) {
        let problem = Problem::Flowshop(FlowShopInstance::new(vec![vec![1.0]; 6]).unwrap());
        let fwa = Fwa::new(&problem, Preset::Baseline, FwaParams::default()).unwrap();
        let inds: Vec<Individual> = cands
            .iter()
            .map(|(p, f)| Individual {
                payload: Payload::Perm(p.clone()),
                times: None,
                fitness: f.map_or(f64::INFINITY, f64::from),
            })
            .collect();
        let out = fwa.select_next(&inds[..5], &inds[5..], &[]);
        prop_assert_eq!(out.len(), 5);
        let best = inds.iter().map(|i| i.fitness).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(out[0].fitness, best);
        // Payload duplicates only appear when there are fewer than five distinct payloads.
        let distinct: HashSet<&Payload> = inds.iter().map(|i| &i.payload).collect();
        let chosen: HashSet<&Payload> = out.iter().map(|i| &i.payload).collect();
        prop_assert_eq!(chosen.len(), distinct.len().min(5));
    }
}

#[test]
fn zero_budget_returns_best_initial_individual() {
    let problem = Problem::Airland(toy_landing());
    let mut budget = EvaluationBudget::with_evaluations(0);
    let r = run_fwa(&problem, Preset::Appendix, FwaParams::default(), &mut budget, 3).unwrap();
    assert_eq!(r.evaluations, 0);
    assert_eq!(r.iterations, 0);
    let target_cost = solve_sequence(&toy_landing(), &[1, 0, 2, 3]).unwrap().cost;
    assert_eq!(r.best_fitness, target_cost);
    assert!(r.best_solution.is_some());
}

#[test]
fn runs_are_reproducible_and_respect_the_budget() {
    for problem in all_problems() {
        for preset in [Preset::Baseline, Preset::Appendix] {
            let Ok(fwa) = Fwa::new(&problem, preset, FwaParams::default()) else { continue };
            let mut b1 = EvaluationBudget::with_evaluations(300);
            let mut b2 = EvaluationBudget::with_evaluations(300);
            let r1 = fwa.run(&mut b1, 99);
            let r2 = fwa.run(&mut b2, 99);
            assert_eq!(r1, r2);
            assert!(r1.evaluations <= 300);
            assert!(r1.trace.windows(2).all(|w| w[1] <= w[0]));
            let sol = r1.best_solution.as_ref().expect("feasible solution found");
            let out = problem.evaluate(sol).unwrap();
            assert_eq!(out.objective(), Some(r1.best_fitness));
        }
    }
}

#[test]
fn stall_limit_stops_early() {
    let problem = pmedian(4, 4);
    let params = FwaParams { stall_limit: 3, ..FwaParams::default() };
    let r = run_fwa(&problem, Preset::Baseline, params, &mut EvaluationBudget::with_evaluations(10_000), 0).unwrap();
    // Only one feasible payload exists, so the best never improves after iteration 1.
    assert_eq!(r.iterations, 4);
    assert_eq!(r.best_solution, Some(Solution::Medians(vec![0, 1, 2, 3])));
}

#[test]
fn appendix_preset_solves_the_toy() {
    let inst = toy_instance();
    let mut budget = EvaluationBudget::with_evaluations(100_000);
    let params = FwaParams { max_iter: 50, ..FwaParams::default() };
    let r = run_fwa(&inst.problem, Preset::Appendix, params, &mut budget, 7).unwrap();
    assert!(r.iterations <= 50);
    assert!((inst.ratio(r.best_fitness).unwrap().value - 1.0).abs() < 1e-9);
}

#[test]
fn baseline_preset_handles_random_seeds() {
    let mut rng = Rng::seed_from_u64(77);
    for _ in 0..5 {
        let seed = rng.random::<u64>();
        for problem in all_problems() {
            let r = run_fwa(&problem, Preset::Baseline, FwaParams::default(), &mut EvaluationBudget::with_evaluations(200), seed)
                .unwrap();
            assert!(r.best_fitness.is_finite());
        }
    }
}
