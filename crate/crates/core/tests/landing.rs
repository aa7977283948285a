use coevo::landing::{grid_oracle_schedule, solve_sequence};
use coevo::problem::{evaluate_landing, AircraftLandingInstance, Plane};
use proptest::prelude::*;

mod common;
use common::permutations;

prop_compose! {
    fn micro_instance()(n in 1usize..=4)(
        windows in prop::collection::vec((0u8..6, 0u8..4, 0u8..4, 0u8..4, 0u8..4), n),
        seps in prop::collection::vec(0u8..4, n * n),
    ) -> AircraftLandingInstance {
        let n = windows.len();
        let planes = windows
            .iter()
            .map(|&(e, dt, dl, a, b)| Plane {
                appearance: 0.0,
                earliest: e as f64,
                target: (e + dt) as f64,
                latest: (e + dt + dl) as f64,
                penalty_early: a as f64,
                penalty_late: b as f64,
            })
            .collect();
        // A zero gap must be zero in both directions.
        let gap = |i: usize, j: usize| {
            if seps[i * n + j] == 0 || seps[j * n + i] == 0 { 0.0 } else { seps[i * n + j] as f64 }
        };
        let separation = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { gap(i, j) }).collect())
            .collect();
        AircraftLandingInstance::new(planes, separation, 0.0).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lp_matches_grid_and_evaluator(inst in micro_instance()) {
        for seq in permutations(inst.n_planes()) {
            let lp = solve_sequence(&inst, &seq).unwrap();
            let grid = grid_oracle_schedule(&inst, &seq, 1.0).unwrap();
            prop_assert_eq!(lp.feasible, grid.feasible);
            if lp.feasible {
                prop_assert!((lp.cost - grid.cost).abs() <= 1e-9, "{} vs {}", lp.cost, grid.cost);
                // Integer data has an integral componentwise-earliest optimum.
                prop_assert_eq!(&lp.times, &grid.times);
                let sched = lp.to_schedule(&seq).unwrap();
                let out = evaluate_landing(&inst, &sched).unwrap();
                prop_assert!(out.is_feasible());
                prop_assert!((out.objective().unwrap() - lp.cost).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn cost_is_translation_invariant(inst in micro_instance(), shift in -50i32..50) {
        let d = shift as f64;
        let mut moved = inst.clone();
        for p in &mut moved.planes {
            p.earliest += d;
            p.target += d;
            p.latest += d;
        }
        for seq in permutations(inst.n_planes()) {
            let a = solve_sequence(&inst, &seq).unwrap();
            let b = solve_sequence(&moved, &seq).unwrap();
            prop_assert_eq!(a.feasible, b.feasible);
            if a.feasible {
                prop_assert!((a.cost - b.cost).abs() <= 1e-9);
                for (x, y) in a.times.iter().zip(&b.times) {
                    prop_assert!((x + d - y).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn relaxing_a_latest_time_never_hurts(inst in micro_instance(), which in 0usize..4, extra in 1u8..6) {
        let mut relaxed = inst.clone();
        let k = which % inst.n_planes();
        relaxed.planes[k].latest += extra as f64;
        for seq in permutations(inst.n_planes()) {
            let a = solve_sequence(&inst, &seq).unwrap();
            let b = solve_sequence(&relaxed, &seq).unwrap();
            if a.feasible {
                prop_assert!(b.feasible);
                prop_assert!(b.cost <= a.cost + 1e-9);
            }
        }
    }
}

#[test]
fn fractional_data_beats_or_matches_the_grid() {
    // Optimum at t = 2.5 lies off the unit grid, so the LP is strictly better.
    let plane = |e: f64, tau: f64, l: f64| Plane {
        appearance: 0.0,
        earliest: e,
        target: tau,
        latest: l,
        penalty_early: 1.0,
        penalty_late: 1.0,
    };
    let inst = AircraftLandingInstance::new(vec![plane(0.0, 2.5, 6.0)], vec![vec![0.0]], 0.0).unwrap();
    let lp = solve_sequence(&inst, &[0]).unwrap();
    let grid = grid_oracle_schedule(&inst, &[0], 1.0).unwrap();
    assert_eq!(lp.cost, 0.0);
    assert_eq!(grid.cost, 0.5);
}

#[test]
fn larger_instance_is_consistent_with_evaluator() {
    // 12 planes, staggered targets and a non-metric separation matrix.
    let n = 12;
    let planes: Vec<Plane> = (0..n)
        .map(|i| {
            let tau = 10.0 + 7.0 * ((i * 5) % n) as f64;
            Plane {
                appearance: 0.0,
                earliest: tau - 10.0,
                target: tau,
                latest: tau + 60.0,
                penalty_early: 1.0 + (i % 3) as f64,
                penalty_late: 2.0 + (i % 4) as f64,
            }
        })
        .collect();
    let separation: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 3.0 + ((i + 2 * j) % 5) as f64 }).collect())
        .collect();
    let inst = AircraftLandingInstance::new(planes, separation, 0.0).unwrap();
    let seq = coevo::landing::target_order(&inst);
    let r = solve_sequence(&inst, &seq).unwrap();
    assert!(r.feasible);
    let out = evaluate_landing(&inst, &r.to_schedule(&seq).unwrap()).unwrap();
    assert!((out.objective().unwrap() - r.cost).abs() < 1e-9);
    for k in 1..n {
        assert!(r.times[k] >= r.times[k - 1]);
    }
}
