//! Brute-force reference for the sequence LP: enumerate every grid-aligned time vector.

use super::{check_permutation, LandingError, SequenceScheduleResult};
use crate::problem::AircraftLandingInstance;

const MAX_GRID: u128 = 1_000_000;

fn grid_index(x: f64, step: f64) -> Result<i64, LandingError> {
    let k = (x / step).round();
    if (k * step - x).abs() > 1e-9 * x.abs().max(1.0) {
        return Err(LandingError::OffGrid(x));
    }
    Ok(k as i64)
}

/// Exhaustive search over times on the lattice `step·ℤ`, in sequence order.
///
/// Requires every window bound and separation to be a multiple of `step`, and at most
/// one million candidate time vectors. Among minimal-cost vectors the lexicographically
/// earliest is returned.
pub fn grid_oracle_schedule(
    inst: &AircraftLandingInstance,
    seq: &[usize],
    step: f64,
) -> Result<SequenceScheduleResult, LandingError> {
    let n = inst.n_planes();
    check_permutation(seq, n)?;
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut total: u128 = 1;
    for &p in seq {
        let plane = &inst.planes[p];
        let a = grid_index(plane.earliest, step)?;
        let b = grid_index(plane.latest, step)?;
        total = total.saturating_mul((b - a + 1) as u128);
        lo.push(a);
        hi.push(b);
    }
    if total > MAX_GRID {
        return Err(LandingError::GridTooLarge(total));
    }
    let mut sep = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            sep[i][j] = grid_index(inst.separation[seq[i]][seq[j]], step)?;
        }
    }

    struct Search<'a> {
        inst: &'a AircraftLandingInstance,
        seq: &'a [usize],
        step: f64,
        lo: Vec<i64>,
        hi: Vec<i64>,
        sep: Vec<Vec<i64>>,
        current: Vec<i64>,
        best: Option<(f64, Vec<i64>)>,
    }

    impl Search<'_> {
        fn run(&mut self, k: usize, cost: f64) {
            if k == self.seq.len() {
                if self.best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    self.best = Some((cost, self.current.clone()));
                }
                return;
            }
            let plane = &self.inst.planes[self.seq[k]];
            for g in self.lo[k]..=self.hi[k] {
                if (0..k).any(|i| g - self.current[i] < self.sep[i][k]) {
                    continue;
                }
                let t = g as f64 * self.step;
                let c = plane.penalty_early * (plane.target - t).max(0.0)
                    + plane.penalty_late * (t - plane.target).max(0.0);
                self.current.push(g);
                self.run(k + 1, cost + c);
                self.current.pop();
            }
        }
    }

    let mut search = Search { inst, seq, step, lo, hi, sep, current: Vec::with_capacity(n), best: None };
    search.run(0, 0.0);
    Ok(match search.best {
        None => SequenceScheduleResult::infeasible(),
        Some((_, grid)) => {
            let times: Vec<f64> = grid.iter().map(|&g| g as f64 * step).collect();
            let cost = super::sequence_cost(inst, seq, &times);
            SequenceScheduleResult { times, cost, feasible: true }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Plane;

    fn plane(e: f64, tau: f64, l: f64) -> Plane {
        Plane { appearance: 0.0, earliest: e, target: tau, latest: l, penalty_early: 1.0, penalty_late: 1.0 }
    }

    fn uniform(planes: Vec<Plane>, s: f64) -> AircraftLandingInstance {
        let n = planes.len();
        let sep = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { s }).collect()).collect();
        AircraftLandingInstance::new(planes, sep, 0.0).unwrap()
    }

    #[test]
    fn twin_planes_on_unit_grid() {
        let inst = uniform(vec![plane(0.0, 0.0, 10.0); 2], 5.0);
        let r = grid_oracle_schedule(&inst, &[0, 1], 1.0).unwrap();
        assert_eq!(r.cost, 5.0);
        assert_eq!(r.times, vec![0.0, 5.0]);
    }

    #[test]
    fn single_plane() {
        let inst = uniform(vec![plane(0.0, 3.0, 6.0)], 0.0);
        assert_eq!(grid_oracle_schedule(&inst, &[0], 1.0).unwrap().cost, 0.0);
    }

    #[test]
    fn three_planes_fit_their_targets() {
        let inst = uniform(vec![plane(0.0, 0.0, 4.0), plane(0.0, 2.0, 4.0), plane(0.0, 4.0, 4.0)], 2.0);
        let r = grid_oracle_schedule(&inst, &[0, 1, 2], 1.0).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.times, vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn refuses_large_or_off_grid_inputs() {
        let inst = uniform(vec![plane(0.0, 0.0, 200.0); 3], 1.0);
        assert!(matches!(grid_oracle_schedule(&inst, &[0, 1, 2], 1.0), Err(LandingError::GridTooLarge(_))));
        let inst = uniform(vec![plane(0.0, 0.5, 2.5)], 0.0);
        assert!(matches!(grid_oracle_schedule(&inst, &[0], 1.0), Err(LandingError::OffGrid(_))));
    }

    #[test]
    fn reports_infeasible_sequences() {
        let inst = uniform(vec![plane(0.0, 0.0, 10.0), plane(0.0, 1.0, 3.0)], 5.0);
        assert!(!grid_oracle_schedule(&inst, &[0, 1], 1.0).unwrap().feasible);
    }
}
